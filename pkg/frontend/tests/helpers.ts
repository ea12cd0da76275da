/** Shared fixtures: record/offer/event factories and a scriptable fake client. */

import { vi } from "vitest";
import {
  OfferView,
  RequestRecord,
  TraceEventView,
} from "../src/api.js";
import { GatewayApi } from "../src/state.js";

export function offer(over: Partial<OfferView> = {}): OfferView {
  return {
    itinerary_id: "it-1",
    legs: [
      {
        leg_id: "l1",
        provider: "p1",
        origin: "A",
        destination: "B",
        depart: 10,
        arrive: 50,
        cost: "40.00",
        insurance: 2,
        capacity: 20,
      },
    ],
    total_cost: "40.00",
    total_time: 40,
    insurance: 2,
    utilities: { cost: 1, time: 0.5, insurance: 0 },
    score: 0.625,
    rank: 1,
    status: "offered",
    ...over,
  };
}

export function record(over: Partial<RequestRecord> = {}): RequestRecord {
  return {
    conversation_id: "WEB-1/0",
    request_id: "WEB-1",
    status: "presented",
    presented_count: 1,
    offers: [offer()],
    amendments: [],
    result: null,
    refusal: null,
    updated_tick: 5,
    ...over,
  };
}

export function traceEvent(over: Partial<TraceEventView> = {}): TraceEventView {
  return {
    seq: 0,
    tick: 1,
    conversation_id: "WEB-1/0",
    performative: "request",
    sender: { name: "web", ordinal: 4 },
    receiver: { name: "broker", ordinal: 0 },
    content_tag: "transport-request",
    content_summary: "WEB-1 A->C",
    ...over,
  };
}

export interface FakeClient extends GatewayApi {
  scenario: ReturnType<typeof vi.fn>;
  submitRequest: ReturnType<typeof vi.fn>;
  proposals: ReturnType<typeof vi.fn>;
  putWeights: ReturnType<typeof vi.fn>;
  amend: ReturnType<typeof vi.fn>;
  select: ReturnType<typeof vi.fn>;
  trace: ReturnType<typeof vi.fn>;
}

export function fakeClient(): FakeClient {
  return {
    scenario: vi.fn(async () => ({
      name: "fixture",
      description: "",
      broker: "broker",
      providers: ["p1", "p2"],
      customers: [],
      tick: 3,
    })),
    submitRequest: vi.fn(async () => record()),
    proposals: vi.fn(async () => record()),
    putWeights: vi.fn(async () => record()),
    amend: vi.fn(async () => record()),
    select: vi.fn(async () => record()),
    trace: vi.fn(async () => ({ events: [] as TraceEventView[] })),
  };
}
