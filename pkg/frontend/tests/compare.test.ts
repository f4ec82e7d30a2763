import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ScenarioRunner, compareScenarios, makeScenario } from "../src/scenario.js";
import { N, mockService } from "./mock.js";

const WINDOW = "2021-02-18T06:00";

async function resolved(airports: string[], window = WINDOW) {
  const runner = new ScenarioRunner(new ApiClient("", mockService().fetch));
  return runner.run(makeScenario(window, airports));
}

describe("compare_scenarios", () => {
  it("identical scenarios give an all-zero diff with one row per airport", async () => {
    const a = await resolved(["AP00", "AP02"]);
    const diff = compareScenarios(a, a);
    expect(diff.rows).toHaveLength(N);
    expect(diff.rows.every((r) => r.diff === 0)).toBe(true);
    expect(diff.windowMismatch).toBe(false);
  });

  it("swapping the scenarios negates the diff", async () => {
    const a = await resolved(["AP00"]);
    const b = await resolved([]);
    const ab = compareScenarios(a, b);
    const ba = compareScenarios(b, a);
    ab.rows.forEach((row, i) => {
      // === so a zero row compares equal to its negation (-0 vs 0)
      expect(ba.rows[i]!.diff === -row.diff).toBe(true);
    });
  });

  it("row count always matches the airport listing", async () => {
    const a = await resolved(["AP01", "AP03", "AP05"]);
    const b = await resolved(["AP02"]);
    expect(compareScenarios(a, b).rows.map((r) => r.code)).toHaveLength(N);
  });

  it("window mismatch is flagged but the comparison still runs", async () => {
    const a = await resolved(["AP00"], "2021-02-18T06:00");
    const b = await resolved(["AP00"], "2021-02-19T06:00");
    const diff = compareScenarios(a, b);
    expect(diff.windowMismatch).toBe(true);
    expect(diff.rows).toHaveLength(N);
  });

  it("unresolved scenarios are rejected", async () => {
    const a = await resolved(["AP00"]);
    expect(() => compareScenarios(a, makeScenario(WINDOW, ["AP01"]))).toThrow(/run it first/);
  });
});
