/**
 * One-page markdown report for a run directory: energy verdicts, the
 * stationary balance residual, divergence records and figure links.
 *
 * Everything is read from the manifest, verdicts.txt and the CSVs; no
 * statistic is recomputed.
 */

import { promises as fs } from "fs";
import path from "path";
import { column, parseCsv, stringColumn } from "./csv.js";

export interface Verdict {
  name: string;
  passed: boolean;
  detail: string;
}

export function parseVerdicts(text: string): Verdict[] {
  const out: Verdict[] = [];
  for (const line of text.split(/\r?\n/)) {
    const m = line.match(/^([\w[\]]+): (PASS|FAIL) \((.*)\)$/);
    if (m) out.push({ name: m[1], passed: m[2] === "PASS", detail: m[3] });
  }
  return out;
}

/** residual=<number> lifted from the stationary_balance verdict detail. */
export function balanceResidual(verdicts: Verdict[]): number | null {
  const v = verdicts.find((x) => x.name === "stationary_balance");
  if (!v) return null;
  const m = v.detail.match(/residual=([-+0-9.eE]+)/);
  return m ? Number(m[1]) : null;
}

async function maybeRead(file: string): Promise<string | null> {
  try {
    return await fs.readFile(file, "utf8");
  } catch {
    return null;
  }
}

function configEcho(manifest: { config_echo?: string[] }): Record<string, string> {
  const out: Record<string, string> = {};
  for (const line of manifest.config_echo ?? []) {
    const eq = line.indexOf("=");
    if (eq > 0) out[line.slice(0, eq)] = line.slice(eq + 1);
  }
  return out;
}

/**
 * Stationary second moments of the linear (Ornstein-Uhlenbeck) system,
 * summed over the truncated lattice.  These are configuration-derived
 * reference values, not statistics recomputed from the data.
 */
export function stokesReferences(echo: Record<string, string>): { h2: number; v2: number } | null {
  const nu = Number(echo["physics.nu"]);
  const n = Number(echo["discretization.n_modes"]);
  const sigma0 = Number(echo["noise.sigma0"]);
  const q = Number(echo["noise.q_exponent"]);
  if (![nu, n, sigma0, q].every(Number.isFinite)) return null;
  let h2 = 0;
  let v2 = 0;
  for (let a = -n; a <= n; a++) {
    for (let b = -n; b <= n; b++) {
      for (let c = -n; c <= n; c++) {
        if (a === 0 && b === 0 && c === 0) continue;
        const ksq = a * a + b * b + c * c;
        const qk = sigma0 * sigma0 * Math.pow(ksq, -q);
        h2 += (2 * qk) / (2 * nu * ksq);
        v2 += (2 * qk) / (2 * nu);
      }
    }
  }
  return { h2, v2 };
}

export async function buildReport(runDir: string): Promise<string> {
  const manifestText = await maybeRead(path.join(runDir, "manifest.json"));
  if (manifestText === null) {
    throw new Error(`${runDir}: manifest.json not found; not a finished run directory`);
  }
  const manifest = JSON.parse(manifestText);
  const lines: string[] = [];
  lines.push(`# Run report: ${path.basename(runDir)}`);
  lines.push("");
  lines.push(`- config hash: \`${manifest.config_hash}\``);
  lines.push(`- code version: ${manifest.version}`);
  lines.push(`- files: ${Object.keys(manifest.files ?? {}).length}`);
  const divergences = manifest.divergences ?? [];
  if (divergences.length > 0) {
    lines.push(`- **${divergences.length} trajectories diverged and were excluded:**`);
    for (const d of divergences) {
      lines.push(`  - trajectory ${d.trajectory} at t=${d.time}`);
    }
  } else {
    lines.push("- no divergent trajectories");
  }
  lines.push("");

  const verdictText = await maybeRead(path.join(runDir, "verdicts.txt"));
  if (verdictText !== null) {
    const verdicts = parseVerdicts(verdictText);
    lines.push("## Energy verdicts");
    lines.push("");
    for (const v of verdicts) {
      lines.push(`- ${v.passed ? "PASS" : "**FAIL**"} \`${v.name}\` (${v.detail})`);
    }
    const residual = balanceResidual(verdicts);
    if (residual !== null) {
      lines.push("");
      lines.push(`Stationary balance residual (2 nu eps_hat - sigma^2): **${residual}**`);
    }
    lines.push("");
  }

  const echo = configEcho(manifest);
  if (echo["physics.system"] === "stokes") {
    const ref = stokesReferences(echo);
    if (ref) {
      lines.push("## Analytic linear-system references");
      lines.push("");
      lines.push("Stationary second moments of the noise-driven linear system");
      lines.push("(compare against the measured means below):");
      lines.push("");
      lines.push(`- reference mean |x|^2_H: **${ref.h2}**`);
      lines.push(`- reference mean |x|^2_V: **${ref.v2}**`);
      lines.push("");
    }
  }

  const measureText = await maybeRead(path.join(runDir, "measure.csv"));
  if (measureText !== null) {
    const table = parseCsv(measureText);
    const names = stringColumn(table, "observable");
    const means = column(table, "mean");
    const wanted = ["eps_hat", "iota_flux", "iota_balance", "sigma2", "balance_residual"];
    const rows = names
      .map((name, i) => [name, means[i]] as [string, number])
      .filter(([name]) => wanted.includes(name));
    if (rows.length > 0) {
      lines.push("## Dissipation bookkeeping");
      lines.push("");
      lines.push("| quantity | value |");
      lines.push("| --- | --- |");
      for (const [name, value] of rows) lines.push(`| ${name} | ${value} |`);
      lines.push("");
    }
  }

  const figures = Object.keys(manifest.files ?? {}).filter((f) => f.endsWith(".svg"));
  const csvs = Object.keys(manifest.files ?? {}).filter((f) => f.endsWith(".csv"));
  lines.push("## Artifacts");
  lines.push("");
  for (const f of figures) lines.push(`- figure: [${f}](${f})`);
  for (const f of csvs) lines.push(`- data: [${f}](${f})`);
  lines.push("");
  return lines.join("\n");
}
