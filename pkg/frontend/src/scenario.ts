/**
 * Scenario state and the intervene workflow.
 *
 * A scenario is a (window, intervened-airport-set) pair plus the cached
 * service response for exactly that pair; changing either marks the cache
 * stale. Running a scenario issues one POST /api/intervene, cancelling any
 * previous in-flight request for the same runner.
 */

import { ApiClient, InterveneResponse } from "./api.js";

export type Channel = 0 | 1; // 0 = arrival, 1 = departure

export interface DisplayOptions {
  channel: Channel;
  step: number; // 0-based horizon step
}

export interface Scenario {
  windowStart: string;
  airports: string[];
  response: InterveneResponse | null;
  stale: boolean;
  display: DisplayOptions;
}

export function makeScenario(windowStart: string, airports: string[]): Scenario {
  return {
    windowStart,
    airports: [...airports].sort(),
    response: null,
    stale: true,
    display: { channel: 0, step: 0 },
  };
}

function sameSelection(s: Scenario, windowStart: string, airports: string[]): boolean {
  const sorted = [...airports].sort();
  return (
    s.windowStart === windowStart &&
    s.airports.length === sorted.length &&
    s.airports.every((a, i) => a === sorted[i])
  );
}

/** Change the (window, set) pair; the cached response goes stale unless unchanged. */
export function updateSelection(s: Scenario, windowStart: string, airports: string[]): Scenario {
  if (sameSelection(s, windowStart, airports)) return s;
  return { ...makeScenario(windowStart, airports), display: s.display };
}

export class ScenarioRunner {
  private inflight: AbortController | null = null;

  constructor(private readonly client: ApiClient) {}

  /** Resolve the scenario's response; supersedes any in-flight run. */
  async run(scenario: Scenario): Promise<Scenario> {
    if (!scenario.stale && scenario.response) return scenario;
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const response = await this.client.intervene(
        { window_start: scenario.windowStart, airports: scenario.airports },
        controller.signal,
      );
      return { ...scenario, response, stale: false };
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }
}

export interface NetworkNode {
  code: string;
  lat: number;
  lon: number;
  /** delta minutes straight from response.delta[airport][step][channel] */
  value: number;
}

export interface NetworkView {
  windowStart: string;
  channel: Channel;
  step: number;
  horizonTime: string | null;
  nodes: NetworkNode[];
}

/** Per-airport delta at the displayed (step, channel); values are response fields. */
export function networkView(
  scenario: Scenario,
  coordinates: Map<string, { lat: number; lon: number }>,
): NetworkView {
  const r = requireResponse(scenario);
  const { channel, step } = scenario.display;
  const nodes = r.airports.map((code, i) => {
    const coord = coordinates.get(code) ?? { lat: 0, lon: 0 };
    return { code, lat: coord.lat, lon: coord.lon, value: r.delta[i]![step]![channel]! };
  });
  return {
    windowStart: r.window_start,
    channel,
    step,
    horizonTime: r.horizon_times[step] ?? null,
    nodes,
  };
}

/** Delta over all horizon steps for one airport at the displayed channel. */
export function deltaSeries(scenario: Scenario, code: string): number[] {
  const r = requireResponse(scenario);
  const i = r.airports.indexOf(code);
  if (i < 0) throw new Error(`airport ${code} not in response`);
  return r.delta[i]!.map((step) => step[scenario.display.channel]!);
}

export interface DiffRow {
  code: string;
  a: number;
  b: number;
  diff: number; // a - b, the delta-of-deltas
}

export interface ScenarioDiff {
  windowMismatch: boolean;
  channel: Channel;
  step: number;
  rows: DiffRow[];
}

/**
 * Side-by-side comparison at scenario A's display options. A window
 * mismatch is flagged but the comparison is still produced.
 */
export function compareScenarios(a: Scenario, b: Scenario): ScenarioDiff {
  const ra = requireResponse(a);
  const rb = requireResponse(b);
  if (ra.airports.length !== rb.airports.length) {
    throw new Error("scenarios cover different airport sets");
  }
  const { channel, step } = a.display;
  const rows = ra.airports.map((code, i) => {
    const va = ra.delta[i]![step]![channel]!;
    const j = rb.airports.indexOf(code);
    const vb = j >= 0 ? rb.delta[j]![step]![channel]! : 0;
    return { code, a: va, b: vb, diff: va - vb };
  });
  return {
    windowMismatch: ra.window_start !== rb.window_start,
    channel,
    step,
    rows,
  };
}

function requireResponse(s: Scenario): InterveneResponse {
  if (!s.response || s.stale) {
    throw new Error("scenario not resolved; run it first");
  }
  return s.response;
}
