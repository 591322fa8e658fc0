/**
 * The five figure kinds, each a pure function of CSV text.
 *
 * Figures only read what the simulator wrote: no statistic is recomputed
 * here, and the mixing overlay uses the (C, a) recorded in the file header
 * rather than refitting.
 */

import { SchemaError, Table, column, parseCsv, parseFit, requireColumns, stringColumn } from "./csv.js";
import { PALETTE, Svg, WIDTH, fmt, frame, legend, linearScale, logScale } from "./svg.js";

export type FigureKind = "spectrum" | "flux" | "mixing" | "stopping" | "energy";

function captionFor(table: Table, source: string): string {
  const hash = table.meta["config_hash"] ?? "unknown";
  return `${source} | config ${hash}`;
}

/** Shell-energy spectrum from measure.csv rows named shell:<k>. */
export function renderSpectrum(csvText: string, source = "measure.csv"): string {
  const table = parseCsv(csvText);
  requireColumns(table, ["observable", "mean"], source);
  const names = stringColumn(table, "observable");
  const means = column(table, "mean");
  const shells: [number, number][] = [];
  names.forEach((name, i) => {
    if (name.startsWith("shell:")) shells.push([Number(name.slice(6)), means[i]]);
  });
  if (shells.length === 0) {
    throw new SchemaError(`${source}: no shell:<k> observables to plot`);
  }
  shells.sort((a, b) => a[0] - b[0]);
  const positive = shells.filter(([, e]) => e > 0);
  const eLo = Math.min(...positive.map(([, e]) => e));
  const eHi = Math.max(...positive.map(([, e]) => e));
  const f = frame(
    logScale, logScale,
    [shells[0][0], shells[shells.length - 1][0]],
    [eLo / 1.5, eHi * 1.5],
    "Stationary shell-energy spectrum", "wavenumber shell", "mean shell energy",
    captionFor(table, source),
  );
  const pts: [number, number][] = positive.map(([k, e]) => [f.x(k), f.y(e)]);
  f.svg.polyline(pts, PALETTE[0]);
  for (const [px, py] of pts) f.svg.circle(px, py, 3, PALETTE[0]);
  return f.svg.render();
}

/** Flux profile with the per-level balance line from flux.csv. */
export function renderFlux(csvText: string, source = "flux.csv"): string {
  const table = parseCsv(csvText);
  requireColumns(table, ["K", "mean_flux", "se", "balance_residual"], source);
  const k = column(table, "K");
  const flux = column(table, "mean_flux");
  const se = column(table, "se");
  const residual = column(table, "balance_residual");
  const balance = flux.map((v, i) => v - residual[i]);
  const all = [...flux, ...balance, 0];
  const f = frame(
    linearScale, linearScale,
    [Math.min(...k), Math.max(...k)],
    [Math.min(...all) * 1.2 - 1e-12, Math.max(...all) * 1.2 + 1e-12],
    "Energy flux through wavenumber K", "K", "mean flux",
    captionFor(table, source),
  );
  f.svg.line(f.plot.x0, f.y(0), f.plot.x1, f.y(0), "#999999", 1, "4 3");
  k.forEach((kv, i) => {
    const px = f.x(kv);
    f.svg.line(px, f.y(flux[i] - 3 * se[i]), px, f.y(flux[i] + 3 * se[i]), PALETTE[0], 1);
  });
  f.svg.polyline(k.map((kv, i) => [f.x(kv), f.y(flux[i])]), PALETTE[0]);
  k.forEach((kv, i) => f.svg.circle(f.x(kv), f.y(flux[i]), 3, PALETTE[0]));
  f.svg.polyline(k.map((kv, i) => [f.x(kv), f.y(balance[i])]), PALETTE[1], 1.5, "6 3");
  legend(f.svg, [["measured flux (3 SE bars)", PALETTE[0]], ["injection-dissipation balance", PALETTE[1]]],
    f.plot.x0 + 12, f.plot.y1 + 16);
  return f.svg.render();
}

/** Relaxation distance on a log axis with the recorded exponential fit. */
export function renderMixing(csvText: string, source = "mixing.csv"): string {
  const table = parseCsv(csvText);
  requireColumns(table, ["t", "distance", "se"], source);
  const t = column(table, "t");
  const d = column(table, "distance");
  const se = column(table, "se");
  const positive = d.filter((v) => v > 0);
  if (positive.length === 0) {
    throw new SchemaError(`${source}: all distances are zero; nothing to plot`);
  }
  const f = frame(
    linearScale, logScale,
    [Math.min(...t), Math.max(...t)],
    [Math.min(...positive) / 2, Math.max(...positive) * 2],
    `Distance to the stationary mean (${table.meta["observable"] ?? "observable"})`,
    "t", "|mean - stationary|",
    captionFor(table, source),
  );
  const pts: [number, number][] = [];
  t.forEach((tv, i) => {
    if (d[i] > 0) {
      const px = f.x(tv);
      pts.push([px, f.y(d[i])]);
      const hi = d[i] + 3 * se[i];
      const lo = Math.max(d[i] - 3 * se[i], d[i] / 100);
      f.svg.line(px, f.y(lo), px, f.y(hi), PALETTE[0], 1);
    }
  });
  f.svg.polyline(pts, PALETTE[0]);
  for (const [px, py] of pts) f.svg.circle(px, py, 3, PALETTE[0]);
  const fit = parseFit(table.meta);
  if (fit) {
    const overlay: [number, number][] = [];
    for (const tv of t) {
      const v = fit.c * Math.exp(-fit.a * tv);
      if (v > 0) overlay.push([f.x(tv), f.y(v)]);
    }
    f.svg.polyline(overlay, PALETTE[1], 1.5, "6 3");
    legend(f.svg, [
      ["measured distance (3 SE bars)", PALETTE[0]],
      [`recorded fit: ${fmt(fit.c)} exp(-${fmt(fit.a)} t), r2=${fmt(fit.r2)}`, PALETTE[1]],
    ], f.plot.x0 + 12, f.plot.y1 + 16);
  } else {
    legend(f.svg, [["measured distance (fit unavailable)", PALETTE[0]]], f.plot.x0 + 12, f.plot.y1 + 16);
  }
  return f.svg.render();
}

/** Crossing-probability heat map over (R, delta) from stopping.csv. */
export function renderStopping(csvText: string, source = "stopping.csv"): string {
  const table = parseCsv(csvText);
  requireColumns(table, ["R", "delta", "p_hat", "se", "n"], source);
  const levels = [...new Set(column(table, "R"))].sort((a, b) => a - b);
  const deltas = [...new Set(column(table, "delta"))].sort((a, b) => a - b);
  const p = new Map<string, number>();
  const rs = column(table, "R");
  const ds = column(table, "delta");
  const ps = column(table, "p_hat");
  rs.forEach((r, i) => p.set(`${r}|${ds[i]}`, ps[i]));

  const svg = new Svg();
  const x0 = 110, y0 = 400, cw = 120, ch = 84;
  svg.text(WIDTH / 2, 26, "First-crossing probability P[tau <= delta]", { size: 15, anchor: "middle" });
  deltas.forEach((dv, j) => {
    levels.forEach((rv, i) => {
      const val = p.get(`${rv}|${dv}`) ?? NaN;
      const shade = Number.isNaN(val) ? "#cccccc" : heat(val);
      const x = x0 + j * cw;
      const y = y0 - (i + 1) * ch;
      svg.rect(x, y, cw - 4, ch - 4, shade, 'stroke="#ffffff"');
      svg.text(x + cw / 2 - 2, y + ch / 2 + 2, Number.isNaN(val) ? "n/a" : val.toFixed(2),
        { size: 13, anchor: "middle", fill: val > 0.55 ? "#ffffff" : "#222222" });
    });
  });
  levels.forEach((rv, i) => svg.text(x0 - 10, y0 - i * ch - ch / 2 + 4, `R=${fmt(rv)}`, { size: 12, anchor: "end" }));
  deltas.forEach((dv, j) => svg.text(x0 + j * cw + cw / 2 - 2, y0 + 22, `delta=${fmt(dv)}`, { size: 12, anchor: "middle" }));
  const hash = table.meta["config_hash"] ?? "unknown";
  svg.text(WIDTH / 2, 460, `${source} | config ${hash}`, { size: 10, anchor: "middle", fill: "#777777" });
  return svg.render();
}

function heat(v: number): string {
  // white -> blue ramp
  const c = Math.max(0, Math.min(1, v));
  const r = Math.round(255 - 204 * c);
  const g = Math.round(255 - 144 * c);
  const b = 255 - Math.round(77 * c);
  return `#${r.toString(16).padStart(2, "0")}${g.toString(16).padStart(2, "0")}${b.toString(16).padStart(2, "0")}`;
}

/** Ensemble-mean energy processes from energy.csv. */
export function renderEnergy(csvText: string, source = "energy.csv"): string {
  const table = parseCsv(csvText);
  requireColumns(table, ["t", "E1", "E2", "G"], source);
  const t = column(table, "t");
  const series = table.header.filter((h) => h !== "t");
  const values = series.map((name) => column(table, name));
  const flat = values.flat().filter((v) => Number.isFinite(v));
  const f = frame(
    linearScale, linearScale,
    [Math.min(...t), Math.max(...t)],
    [Math.min(...flat), Math.max(...flat)],
    "Ensemble-mean energy processes", "t", "value",
    captionFor(table, source),
  );
  const entries: [string, string][] = [];
  series.forEach((name, i) => {
    const color = PALETTE[i % PALETTE.length];
    f.svg.polyline(t.map((tv, j) => [f.x(tv), f.y(values[i][j])]), color);
    entries.push([name, color]);
  });
  legend(f.svg, entries, f.plot.x0 + 12, f.plot.y1 + 16);
  return f.svg.render();
}

export function render(kind: FigureKind, csvTexts: string[], sources: string[]): string {
  if (csvTexts.length === 0) throw new SchemaError("no input CSV given");
  const text = csvTexts[0];
  const source = sources[0] ?? "input.csv";
  switch (kind) {
    case "spectrum": return renderSpectrum(text, source);
    case "flux": return renderFlux(text, source);
    case "mixing": return renderMixing(text, source);
    case "stopping": return renderStopping(text, source);
    case "energy": return renderEnergy(text, source);
    default: throw new SchemaError(`unknown figure kind '${kind}'`);
  }
}
