/** DOM wiring: binds the store to the page and polls once per second. */

import { GatewayClient } from "./api.js";
import { ConsoleStore } from "./state.js";
import {
  renderAmendments,
  renderBanner,
  renderProposals,
  renderResult,
  renderTrace,
  renderWeightShares,
} from "./render.js";

const POLL_MS = 1000;

const store = new ConsoleStore(new GatewayClient(""));

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function num(id: string): number {
  return Number((el<HTMLInputElement>(id)).value);
}

function readForm(): void {
  store.state.form = {
    customer: el<HTMLInputElement>("f-customer").value,
    request_id: el<HTMLInputElement>("f-request-id").value,
    origin: el<HTMLInputElement>("f-origin").value,
    destination: el<HTMLInputElement>("f-destination").value,
    earliest_departure: num("f-earliest"),
    latest_arrival: num("f-latest"),
    cargo_size: num("f-cargo"),
    min_insurance: num("f-insurance"),
  };
}

function readWeights(): void {
  store.state.weights = {
    cost: num("w-cost"),
    time: num("w-time"),
    insurance: num("w-insurance"),
  };
}

function render(): void {
  el("banner").innerHTML = renderBanner(store.state.banner);
  el("form-error").textContent = store.state.formError ?? "";
  el("weight-shares").innerHTML = renderWeightShares(store.state);
  el("proposals").innerHTML = renderProposals(store.state.record, store.state.busy);
  el("amendments").innerHTML = renderAmendments(store.state.record);
  el("result").innerHTML = renderResult(store.state.record);
  el("trace").innerHTML = renderTrace(store.state.trace);
  el<HTMLButtonElement>("submit-btn").disabled = store.state.busy;
  el<HTMLButtonElement>("weights-btn").disabled = store.state.busy || store.requestId === null;
  const scenario = store.state.scenario;
  el("scenario").textContent = scenario
    ? `${scenario.name}: broker ${scenario.broker}, providers ${scenario.providers.join(", ")}`
    : "connecting to the market...";
}

async function act(action: () => Promise<void>): Promise<void> {
  render();
  await action();
  render();
}

function wire(): void {
  el<HTMLButtonElement>("submit-btn").addEventListener("click", () => {
    readForm();
    readWeights();
    void act(() => store.submit());
  });

  el<HTMLButtonElement>("weights-btn").addEventListener("click", () => {
    readWeights();
    void act(() => store.applyWeights());
  });

  for (const id of ["w-cost", "w-time", "w-insurance"]) {
    el<HTMLInputElement>(id).addEventListener("input", () => {
      readWeights();
      el("weight-shares").innerHTML = renderWeightShares(store.state);
    });
  }

  el("proposals").addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const itinerary = target.dataset["itinerary"];
    if (!itinerary) return;
    if (target.classList.contains("select-btn")) {
      void act(() => store.select(itinerary));
    } else if (target.classList.contains("amend-btn")) {
      const input = document.querySelector<HTMLInputElement>(
        `.amend-target[data-itinerary="${itinerary}"]`,
      );
      const raw = input?.value.trim() ?? "";
      if (!raw) return;
      void act(() => store.amend(itinerary, "cost", raw));
    }
  });
}

async function boot(): Promise<void> {
  wire();
  await store.loadScenario();
  render();
  setInterval(() => {
    void store.pollOnce().then(render);
  }, POLL_MS);
}

void boot();
