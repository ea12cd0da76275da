/** Typed client for the gateway HTTP API.
 *
 * Every call maps to exactly one endpoint. Non-2xx answers carry one body
 * shape, {code, message, detail}, surfaced as ApiError; a transport-level
 * failure (backend down) becomes ApiError with status 0 so callers can
 * show a retry banner instead of crashing.
 */

export interface LegView {
  leg_id: string;
  provider: string;
  origin: string;
  destination: string;
  depart: number;
  arrive: number;
  cost: string;
  insurance: number;
  capacity: number;
}

export interface UtilityBreakdown {
  cost: number;
  time: number;
  insurance: number;
}

export interface OfferView {
  itinerary_id: string;
  legs: LegView[];
  total_cost: string;
  total_time: number;
  insurance: number;
  utilities: UtilityBreakdown;
  score: number;
  rank: number;
  status: string;
}

export interface AmendmentAsk {
  request_id: string;
  itinerary_id: string;
  criterion: string;
  target: string | number;
}

export interface AmendmentOutcomeView {
  accepted: boolean;
  granted: string | number;
  reason: string;
}

export interface AmendmentView {
  tag: string;
  amendment: AmendmentAsk;
  outcome: AmendmentOutcomeView | null;
}

export interface ResultView {
  tag: string;
  reservation_id: string;
  status: string;
  leg_ids: string[];
  reason: string;
}

export interface RefusalView {
  tag: string;
  code: string;
  detail: string;
}

export type RequestStatus = "pending" | "presented" | "refused" | "closed";

export interface RequestRecord {
  conversation_id: string;
  request_id: string | null;
  status: RequestStatus;
  presented_count: number;
  offers: OfferView[];
  amendments: AmendmentView[];
  result: ResultView | null;
  refusal: RefusalView | null;
  updated_tick: number;
}

export interface AgentRef {
  name: string;
  ordinal: number;
}

export interface TraceEventView {
  seq: number;
  tick: number;
  conversation_id: string;
  performative: string;
  sender: AgentRef;
  receiver: AgentRef;
  content_tag: string;
  content_summary: string;
}

export interface ScenarioInfo {
  name: string;
  description: string;
  broker: string;
  providers: string[];
  customers: string[];
  tick: number;
}

export interface HardConstraintsBody {
  earliest_departure: number;
  latest_arrival: number;
  cargo_size: number;
  min_insurance: number;
}

export interface WeightsBody {
  cost: number;
  time: number;
  insurance: number;
}

export interface TransportRequestBody {
  request_id: string;
  customer: string;
  origin: string;
  destination: string;
  constraints: HardConstraintsBody;
  criteria: WeightsBody;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly summary: string,
    readonly detail: string,
  ) {
    super(`${code}: ${detail || summary}`);
  }
}

async function toError(res: Response): Promise<ApiError> {
  try {
    const body = (await res.json()) as { code?: string; message?: string; detail?: string };
    return new ApiError(
      res.status,
      body.code ?? "error",
      body.message ?? "request failed",
      body.detail ?? "",
    );
  } catch {
    return new ApiError(res.status, "error", "request failed", `status ${res.status}`);
  }
}

export class GatewayClient {
  constructor(
    readonly base: string = "",
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    let res: Response;
    try {
      res = await this.fetchFn(this.base + path, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (exc) {
      throw new ApiError(0, "unreachable", "cannot reach the market", String(exc));
    }
    if (res.status === 202) {
      // still collecting offers; the caller retries on its next poll
      throw new ApiError(202, "pending", "collecting offers", "");
    }
    if (!res.ok) {
      throw await toError(res);
    }
    return (await res.json()) as T;
  }

  scenario(): Promise<ScenarioInfo> {
    return this.call("GET", "/api/scenario");
  }

  submitRequest(customer: string, request: TransportRequestBody): Promise<RequestRecord> {
    return this.call("POST", "/api/requests", { customer, request });
  }

  proposals(requestId: string): Promise<RequestRecord> {
    return this.call("GET", `/api/requests/${encodeURIComponent(requestId)}/proposals`);
  }

  putWeights(requestId: string, weights: WeightsBody): Promise<RequestRecord> {
    return this.call("PUT", `/api/requests/${encodeURIComponent(requestId)}/weights`, weights);
  }

  amend(
    requestId: string,
    amendment: { itinerary_id: string; criterion: string; target: string | number },
  ): Promise<RequestRecord> {
    return this.call("POST", `/api/requests/${encodeURIComponent(requestId)}/amendments`, amendment);
  }

  select(requestId: string, itineraryId: string): Promise<RequestRecord> {
    return this.call("POST", `/api/requests/${encodeURIComponent(requestId)}/selection`, {
      itinerary_id: itineraryId,
    });
  }

  trace(conversation?: string): Promise<{ events: TraceEventView[] }> {
    const suffix = conversation ? `?conversation=${encodeURIComponent(conversation)}` : "";
    return this.call("GET", `/api/trace${suffix}`);
  }
}
