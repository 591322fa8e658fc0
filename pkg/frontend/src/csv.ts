/**
 * CSV reader for the simulator's output files.
 *
 * Files carry `# key=value` comment lines ahead of the header row; the
 * config hash and any fit line are preserved so figures can embed them.
 * Parsing never mutates or rewrites inputs.
 */

export class SchemaError extends Error {}

export interface Table {
  comments: string[];
  /** key=value pairs lifted from the comment lines */
  meta: Record<string, string>;
  header: string[];
  /** row-major cells; numeric where possible */
  rows: (number | string)[][];
}

function parseCell(text: string): number | string {
  if (text === "") return "";
  const v = Number(text);
  return Number.isNaN(v) ? text : v;
}

export function parseCsv(text: string): Table {
  const comments: string[] = [];
  const meta: Record<string, string> = {};
  let header: string[] | null = null;
  const rows: (number | string)[][] = [];
  for (const raw of text.split(/\r?\n/)) {
    const line = raw.trimEnd();
    if (line === "") continue;
    if (line.startsWith("#")) {
      const body = line.replace(/^#\s?/, "");
      comments.push(body);
      const eq = body.indexOf("=");
      if (eq > 0 && !body.slice(0, eq).includes(" ")) {
        meta[body.slice(0, eq)] = body.slice(eq + 1);
      } else if (body.startsWith("fit:")) {
        meta["fit"] = body.slice(4).trim();
      }
      continue;
    }
    if (header === null) {
      header = line.split(",");
    } else {
      rows.push(line.split(",").map(parseCell));
    }
  }
  if (header === null) {
    throw new SchemaError("no header row found");
  }
  return { comments, meta, header, rows };
}

export function requireColumns(table: Table, names: string[], source: string): void {
  for (const name of names) {
    if (!table.header.includes(name)) {
      throw new SchemaError(
        `${source}: missing column '${name}' (have: ${table.header.join(", ")})`,
      );
    }
  }
}

export function column(table: Table, name: string): number[] {
  const i = table.header.indexOf(name);
  if (i < 0) throw new SchemaError(`missing column '${name}'`);
  return table.rows.map((r) => {
    const v = r[i];
    return typeof v === "number" ? v : NaN;
  });
}

export function stringColumn(table: Table, name: string): string[] {
  const i = table.header.indexOf(name);
  if (i < 0) throw new SchemaError(`missing column '${name}'`);
  return table.rows.map((r) => String(r[i]));
}

/** Parse a `fit: C=..., a=..., r2=...` comment into numbers. */
export function parseFit(meta: Record<string, string>): { c: number; a: number; r2: number } | null {
  const fit = meta["fit"];
  if (!fit || fit === "unavailable") return null;
  const grab = (key: string): number | null => {
    const m = fit.match(new RegExp(`${key}=([-+0-9.eE]+)`));
    return m ? Number(m[1]) : null;
  };
  const c = grab("C");
  const a = grab("a");
  const r2 = grab("r2");
  if (c === null || a === null || r2 === null) return null;
  return { c, a, r2 };
}
