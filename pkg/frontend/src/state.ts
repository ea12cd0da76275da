/** Console view-model: one store, explicit actions, no hidden I/O.
 *
 * The store never reorders or rescores what the server sent; offers land
 * in the table exactly as ranked. At most one mutating call is in flight
 * at a time, and a rejected mutation leaves everything but the banner as
 * it was.
 */

import {
  ApiError,
  GatewayClient,
  RequestRecord,
  ScenarioInfo,
  TraceEventView,
  TransportRequestBody,
  WeightsBody,
} from "./api.js";

export type GatewayApi = Pick<
  GatewayClient,
  "scenario" | "submitRequest" | "proposals" | "putWeights" | "amend" | "select" | "trace"
>;

export interface FormState {
  customer: string;
  request_id: string;
  origin: string;
  destination: string;
  earliest_departure: number;
  latest_arrival: number;
  cargo_size: number;
  min_insurance: number;
}

export interface Banner {
  kind: "info" | "error" | "retry";
  text: string;
}

export interface ConsoleState {
  scenario: ScenarioInfo | null;
  form: FormState;
  formError: string | null;
  weights: WeightsBody;
  record: RequestRecord | null;
  trace: TraceEventView[];
  banner: Banner | null;
  busy: boolean;
}

export function defaultForm(): FormState {
  return {
    customer: "web",
    request_id: "WEB-1",
    origin: "A",
    destination: "C",
    earliest_departure: 0,
    latest_arrival: 140,
    cargo_size: 5,
    min_insurance: 0,
  };
}

/** Client-side mirror of the server's request validation. */
export function validateForm(form: FormState): string | null {
  if (!form.customer.trim()) return "customer name is required";
  if (!form.request_id.trim()) return "request id is required";
  if (!form.origin.trim() || !form.destination.trim()) return "origin and destination are required";
  if (form.origin.trim() === form.destination.trim()) return "origin and destination must differ";
  if (form.earliest_departure < 0) return "earliest departure cannot be negative";
  if (form.latest_arrival <= form.earliest_departure) return "latest arrival must be after earliest departure";
  if (form.cargo_size < 1) return "cargo size must be at least 1";
  if (form.min_insurance < 0) return "minimum insurance cannot be negative";
  return null;
}

/** Slider positions as shares of their sum, for display next to the sliders. */
export function normalizedShares(weights: WeightsBody): WeightsBody {
  const total = weights.cost + weights.time + weights.insurance;
  if (total <= 0) {
    return { cost: 0, time: 0, insurance: 0 };
  }
  return {
    cost: weights.cost / total,
    time: weights.time / total,
    insurance: weights.insurance / total,
  };
}

function requestBody(form: FormState, weights: WeightsBody): TransportRequestBody {
  return {
    request_id: form.request_id.trim(),
    customer: form.customer.trim(),
    origin: form.origin.trim(),
    destination: form.destination.trim(),
    constraints: {
      earliest_departure: form.earliest_departure,
      latest_arrival: form.latest_arrival,
      cargo_size: form.cargo_size,
      min_insurance: form.min_insurance,
    },
    criteria: { ...weights },
  };
}

export class ConsoleStore {
  readonly state: ConsoleState = {
    scenario: null,
    form: defaultForm(),
    formError: null,
    weights: { cost: 50, time: 30, insurance: 20 },
    record: null,
    trace: [],
    banner: null,
    busy: false,
  };

  private pendingWeights: WeightsBody | null = null;

  constructor(private readonly client: GatewayApi) {}

  get requestId(): string | null {
    return this.state.record?.request_id ?? null;
  }

  async loadScenario(): Promise<void> {
    try {
      this.state.scenario = await this.client.scenario();
      if (this.state.banner?.kind === "retry") this.state.banner = null;
    } catch (exc) {
      this.fail(exc);
    }
  }

  /** Submit the request form. Invalid forms never reach the network. */
  async submit(): Promise<void> {
    this.state.formError = validateForm(this.state.form);
    if (this.state.formError !== null) return;
    if (this.state.weights.cost + this.state.weights.time + this.state.weights.insurance <= 0) {
      this.state.formError = "at least one criteria weight must be positive";
      return;
    }
    await this.mutate(async () => {
      this.state.record = await this.client.submitRequest(
        this.state.form.customer.trim(),
        requestBody(this.state.form, this.state.weights),
      );
      this.state.banner = null;
    });
  }

  /** PUT the current sliders; the reply already carries the new ranking. */
  async applyWeights(): Promise<void> {
    const requestId = this.requestId;
    if (requestId === null) return;
    const weights = { ...this.state.weights };
    if (weights.cost + weights.time + weights.insurance <= 0) {
      this.state.banner = { kind: "error", text: "at least one weight must be positive" };
      return;
    }
    await this.mutate(async () => {
      try {
        this.state.record = await this.client.putWeights(requestId, weights);
        this.pendingWeights = null;
        this.state.banner = null;
      } catch (exc) {
        if (exc instanceof ApiError && exc.status === 202) {
          this.pendingWeights = weights;
          this.state.banner = { kind: "info", text: "collecting offers, will retry" };
          return;
        }
        throw exc;
      }
    });
  }

  async amend(itineraryId: string, criterion: string, target: string | number): Promise<void> {
    const requestId = this.requestId;
    if (requestId === null) return;
    await this.mutate(async () => {
      this.state.record = await this.client.amend(requestId, {
        itinerary_id: itineraryId,
        criterion,
        target,
      });
      this.state.banner = null;
    });
  }

  async select(itineraryId: string): Promise<void> {
    const requestId = this.requestId;
    if (requestId === null) return;
    await this.mutate(async () => {
      this.state.record = await this.client.select(requestId, itineraryId);
      this.state.banner = null;
    });
  }

  /** One poll cycle: refresh proposals and trace, retry a parked reweight. */
  async pollOnce(): Promise<void> {
    if (this.state.busy) return;
    if (this.pendingWeights !== null) {
      await this.applyWeights();
    }
    try {
      const requestId = this.requestId;
      if (requestId !== null) {
        this.state.record = await this.client.proposals(requestId);
      }
      const conversation = this.state.record?.conversation_id;
      this.state.trace = (await this.client.trace(conversation)).events;
      if (this.state.banner?.kind === "retry") this.state.banner = null;
    } catch (exc) {
      if (exc instanceof ApiError && exc.status === 0) {
        this.state.banner = { kind: "retry", text: "market unreachable, retrying" };
        return;
      }
      this.fail(exc);
    }
  }

  /** Run one mutation with the in-flight guard; 4xx only touches the banner. */
  private async mutate(action: () => Promise<void>): Promise<void> {
    if (this.state.busy) return;
    this.state.busy = true;
    try {
      await action();
    } catch (exc) {
      if (exc instanceof ApiError && exc.status === 409) {
        this.state.banner = { kind: "error", text: `already decided: ${exc.detail}` };
        await this.refreshRecord();
      } else {
        this.fail(exc);
      }
    } finally {
      this.state.busy = false;
    }
  }

  private async refreshRecord(): Promise<void> {
    const requestId = this.requestId;
    if (requestId === null) return;
    try {
      this.state.record = await this.client.proposals(requestId);
    } catch {
      // keep the stale table; the next poll will retry
    }
  }

  private fail(exc: unknown): void {
    if (exc instanceof ApiError) {
      this.state.banner =
        exc.status === 0
          ? { kind: "retry", text: "market unreachable, retrying" }
          : { kind: "error", text: `${exc.summary}: ${exc.detail}` };
      return;
    }
    this.state.banner = { kind: "error", text: String(exc) };
  }
}
