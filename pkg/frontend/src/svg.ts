/**
 * Minimal deterministic SVG scene builder: fixed layout, no timestamps,
 * no randomness, so identical inputs reproduce identical bytes.
 */

export const WIDTH = 720;
export const HEIGHT = 480;
export const MARGIN = { left: 72, right: 24, top: 44, bottom: 64 };

export const PALETTE = ["#1f6fb2", "#d1495b", "#3a7d44", "#8d5a97", "#c77d2f", "#4a4a4a"];

export function fmt(x: number): string {
  if (!Number.isFinite(x)) return "0";
  return Number(x.toPrecision(6)).toString();
}

export interface Scale {
  (v: number): number;
  ticks: number[];
  label: (v: number) => string;
}

function niceTicks(lo: number, hi: number, n = 6): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = Math.pow(10, Math.floor(Math.log10(span / n)));
  const err = span / (n * step0);
  const step = step0 * (err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1);
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + 1e-12 * span; v += step) ticks.push(Number(v.toPrecision(12)));
  return ticks;
}

export function linearScale(lo: number, hi: number, rLo: number, rHi: number): Scale {
  if (hi === lo) { hi = lo + 1; }
  const f = ((v: number) => rLo + ((v - lo) / (hi - lo)) * (rHi - rLo)) as Scale;
  f.ticks = niceTicks(lo, hi);
  f.label = fmt;
  return f;
}

export function logScale(lo: number, hi: number, rLo: number, rHi: number): Scale {
  const llo = Math.log10(lo);
  const lhi = Math.log10(hi <= lo ? lo * 10 : hi);
  const f = ((v: number) => rLo + ((Math.log10(v) - llo) / (lhi - llo)) * (rHi - rLo)) as Scale;
  const ticks: number[] = [];
  for (let e = Math.ceil(llo); e <= Math.floor(lhi); e++) ticks.push(Math.pow(10, e));
  f.ticks = ticks.length >= 2 ? ticks : [lo, hi];
  f.label = (v) => {
    const e = Math.log10(v);
    return Number.isInteger(e) ? `1e${e}` : fmt(v);
  };
  return f;
}

export class Svg {
  private parts: string[] = [];

  rect(x: number, y: number, w: number, h: number, fill: string, extra = ""): void {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}" ${extra}/>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1, dash = ""): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${width}"${d}/>`,
    );
  }

  polyline(points: [number, number][], stroke: string, width = 1.5, dash = ""): void {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${width}"${d}/>`,
    );
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.parts.push(`<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${r}" fill="${fill}"/>`);
  }

  text(x: number, y: number, content: string, opts: { size?: number; anchor?: string; fill?: string; rotate?: boolean } = {}): void {
    const size = opts.size ?? 12;
    const anchor = opts.anchor ?? "start";
    const fill = opts.fill ?? "#222222";
    const transform = opts.rotate ? ` transform="rotate(-90 ${fmt(x)} ${fmt(y)})"` : "";
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-family="Helvetica,Arial,sans-serif" font-size="${size}" text-anchor="${anchor}" fill="${fill}"${transform}>${escapeXml(content)}</text>`,
    );
  }

  render(): string {
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
      `<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
      ...this.parts,
      "</svg>",
      "",
    ].join("\n");
  }
}

export function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

export interface Frame {
  svg: Svg;
  x: Scale;
  y: Scale;
  plot: { x0: number; y0: number; x1: number; y1: number };
}

export function frame(
  xScale: (lo: number, hi: number, rLo: number, rHi: number) => Scale,
  yScale: (lo: number, hi: number, rLo: number, rHi: number) => Scale,
  xDomain: [number, number],
  yDomain: [number, number],
  title: string,
  xLabel: string,
  yLabel: string,
  caption: string,
): Frame {
  const svg = new Svg();
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  const x = xScale(xDomain[0], xDomain[1], x0, x1);
  const y = yScale(yDomain[0], yDomain[1], y0, y1);
  svg.text(WIDTH / 2, MARGIN.top - 18, title, { size: 15, anchor: "middle" });
  for (const t of x.ticks) {
    const px = x(t);
    svg.line(px, y0, px, y0 + 5, "#222222");
    svg.line(px, y0, px, y1, "#eeeeee");
    svg.text(px, y0 + 20, x.label(t), { size: 11, anchor: "middle" });
  }
  for (const t of y.ticks) {
    const py = y(t);
    svg.line(x0 - 5, py, x0, py, "#222222");
    svg.line(x0, py, x1, py, "#eeeeee");
    svg.text(x0 - 8, py + 4, y.label(t), { size: 11, anchor: "end" });
  }
  svg.line(x0, y0, x1, y0, "#222222", 1.2);
  svg.line(x0, y0, x0, y1, "#222222", 1.2);
  svg.text(WIDTH / 2, HEIGHT - 26, xLabel, { size: 12, anchor: "middle" });
  svg.text(20, (y0 + y1) / 2, yLabel, { size: 12, anchor: "middle", rotate: true });
  svg.text(WIDTH / 2, HEIGHT - 8, caption, { size: 10, anchor: "middle", fill: "#777777" });
  return { svg, x, y, plot: { x0, y0, x1, y1 } };
}

export function legend(svg: Svg, entries: [string, string][], x: number, y: number): void {
  entries.forEach(([label, color], i) => {
    const py = y + 16 * i;
    svg.line(x, py - 4, x + 18, py - 4, color, 2);
    svg.text(x + 24, py, label, { size: 11 });
  });
}
