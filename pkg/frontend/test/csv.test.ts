import { describe, expect, it } from "vitest";
import { SchemaError, column, parseCsv, parseFit, requireColumns } from "../src/csv.js";

const SAMPLE = `# config_hash=abc123
# fit: C=2.5, a=0.8, r2=0.97
t,distance,se
0.5,2.0,0.1
1.0,1.2,0.08
`;

describe("parseCsv", () => {
  it("separates comments, meta, header and numeric rows", () => {
    const t = parseCsv(SAMPLE);
    expect(t.meta["config_hash"]).toBe("abc123");
    expect(t.header).toEqual(["t", "distance", "se"]);
    expect(t.rows).toHaveLength(2);
    expect(column(t, "distance")).toEqual([2.0, 1.2]);
  });

  it("lifts the fit comment", () => {
    const fit = parseFit(parseCsv(SAMPLE).meta);
    expect(fit).not.toBeNull();
    expect(fit!.a).toBeCloseTo(0.8);
    expect(fit!.c).toBeCloseTo(2.5);
  });

  it("returns null for an unavailable fit", () => {
    const t = parseCsv("# fit: unavailable\nt,distance,se\n1,2,3\n");
    expect(parseFit(t.meta)).toBeNull();
  });

  it("rejects missing columns with a named error", () => {
    const t = parseCsv(SAMPLE);
    expect(() => requireColumns(t, ["nope"], "x.csv")).toThrow(SchemaError);
    expect(() => requireColumns(t, ["nope"], "x.csv")).toThrow(/nope/);
  });

  it("rejects empty input", () => {
    expect(() => parseCsv("")).toThrow(SchemaError);
  });
});
