/**
 * Browser entry point: wires the controls to the scenario runner and
 * renders the network map, per-airport delta series, and the A/B diff.
 *
 * The service base URL comes from the ?api= query parameter and defaults
 * to same-origin.
 */

import { ApiClient, AirportInfo, ApiError } from "./api.js";
import {
  Scenario,
  ScenarioRunner,
  compareScenarios,
  deltaSeries,
  makeScenario,
  networkView,
  updateSelection,
} from "./scenario.js";
import { renderDeltaSeries, renderDiffTable, renderNetworkMap } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function init(): Promise<void> {
  const base = new URLSearchParams(location.search).get("api") ?? "";
  const client = new ApiClient(base);
  const runner = new ScenarioRunner(client);

  const info = await client.model();
  const airports = (await client.airports()).airports;
  const coords = new Map(airports.map((a: AirportInfo) => [a.code, { lat: a.lat, lon: a.lon }]));

  el<HTMLSpanElement>("model-info").textContent =
    `${info.config.n_airports} airports, h=${info.config.history_steps}, p=${info.config.horizon_steps}`;

  const select = el<HTMLSelectElement>("airports");
  for (const a of airports) {
    const opt = document.createElement("option");
    opt.value = a.code;
    opt.textContent = a.code;
    select.appendChild(opt);
  }

  const stepInput = el<HTMLInputElement>("step");
  stepInput.max = String(info.config.horizon_steps);

  let current: Scenario = makeScenario(el<HTMLInputElement>("window-start").value, []);
  let saved: Scenario | null = null;

  function selections(): string[] {
    return [...select.selectedOptions].map((o) => o.value);
  }

  function displayOptions() {
    return {
      channel: (el<HTMLSelectElement>("channel").value === "departure" ? 1 : 0) as 0 | 1,
      step: Math.max(0, Number(stepInput.value) - 1),
    };
  }

  async function refresh(): Promise<void> {
    const status = el<HTMLParagraphElement>("status");
    current = updateSelection(current, el<HTMLInputElement>("window-start").value, selections());
    current.display = displayOptions();
    status.textContent = "running intervention...";
    try {
      current = await runner.run(current);
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") return; // superseded
      status.textContent = err instanceof ApiError ? `service error ${err.code}: ${err.message}` : String(err);
      return;
    }
    status.textContent = "";
    const view = networkView(current, coords);
    el<HTMLDivElement>("map").innerHTML = renderNetworkMap(view);
    const focus = current.airports.length ? current.airports : airports.slice(0, 3).map((a) => a.code);
    const series = new Map(focus.map((code) => [code, deltaSeries(current, code)]));
    el<HTMLDivElement>("series").innerHTML = renderDeltaSeries(
      current.response!.horizon_times,
      series,
    );
    renderDiff();
  }

  function renderDiff(): void {
    const target = el<HTMLDivElement>("diff");
    if (!saved || !current.response || current.stale) {
      target.innerHTML = "";
      return;
    }
    target.innerHTML = renderDiffTable(compareScenarios(current, saved));
  }

  el<HTMLButtonElement>("run").addEventListener("click", () => void refresh());
  el<HTMLButtonElement>("save").addEventListener("click", () => {
    if (current.response && !current.stale) {
      saved = current;
      el<HTMLSpanElement>("saved-label").textContent =
        `saved: ${saved.windowStart} [${saved.airports.join(", ") || "none"}]`;
      renderDiff();
    }
  });
  for (const id of ["channel", "step"]) {
    el<HTMLElement>(id).addEventListener("change", () => void refresh());
  }
}

init().catch((err) => {
  document.body.insertAdjacentHTML("beforeend", `<p class="warn">failed to start: ${String(err)}</p>`);
});
