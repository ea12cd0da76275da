/** Pure HTML renderers: state in, markup out, no DOM access.
 *
 * Scores, ranks, and row order are printed exactly as the server sent
 * them; the only arithmetic here is turning 0..1 utilities into bar
 * widths and slider positions into display shares.
 */

import { OfferView, RequestRecord, TraceEventView } from "./api.js";
import { Banner, ConsoleState, normalizedShares } from "./state.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function title(word: string): string {
  return word ? word[0]!.toUpperCase() + word.slice(1) : word;
}

export function renderBanner(banner: Banner | null): string {
  if (banner === null) return "";
  return `<div class="banner banner-${banner.kind}">${esc(banner.text)}</div>`;
}

export function renderWeightShares(state: ConsoleState): string {
  const shares = normalizedShares(state.weights);
  const pct = (x: number) => `${Math.round(x * 100)}%`;
  return `cost ${pct(shares.cost)} &middot; time ${pct(shares.time)} &middot; insurance ${pct(shares.insurance)}`;
}

function bar(utility: number): string {
  const width = Math.max(0, Math.min(100, utility * 100));
  return `<span class="bar"><span class="bar-fill" style="width:${width.toFixed(1)}%"></span></span>`;
}

function chainLabel(offer: OfferView): string {
  return offer.legs.map((leg) => leg.leg_id).join("+");
}

function routeLabel(offer: OfferView): string {
  const stops = [offer.legs[0]?.origin ?? "?", ...offer.legs.map((leg) => leg.destination)];
  return stops.join(" > ");
}

function offerRow(offer: OfferView, actionable: boolean): string {
  const canAct = actionable && (offer.status === "offered" || offer.status === "amended");
  const disabled = canAct ? "" : " disabled";
  const id = esc(offer.itinerary_id);
  return `<tr data-itinerary="${id}">
    <td>${offer.rank}</td>
    <td>${esc(chainLabel(offer))}<div class="route">${esc(routeLabel(offer))}</div></td>
    <td class="num">${esc(offer.total_cost)}</td>
    <td class="num">${offer.total_time}</td>
    <td class="num">${offer.insurance}</td>
    <td>${bar(offer.utilities.cost)}${bar(offer.utilities.time)}${bar(offer.utilities.insurance)}</td>
    <td class="num">${offer.score.toFixed(4)}</td>
    <td><span class="badge badge-${esc(offer.status)}">${esc(title(offer.status))}</span></td>
    <td class="actions">
      <input class="amend-target" data-itinerary="${id}" size="6" placeholder="cost" ${canAct ? "" : "disabled"}>
      <button class="amend-btn" data-itinerary="${id}"${disabled}>Amend</button>
      <button class="select-btn" data-itinerary="${id}"${disabled}>Select</button>
    </td>
  </tr>`;
}

export function renderProposals(record: RequestRecord | null, busy: boolean): string {
  if (record === null) {
    return `<p class="empty">No request submitted yet.</p>`;
  }
  if (record.status === "refused" && record.refusal !== null) {
    return `<p class="empty">Request refused: ${esc(record.refusal.detail || record.refusal.code)}</p>`;
  }
  if (record.offers.length === 0) {
    return `<p class="empty">No offers presented (yet).</p>`;
  }
  const actionable = !busy && record.result === null;
  const rows = record.offers.map((offer) => offerRow(offer, actionable)).join("\n");
  return `<table class="proposals">
  <thead><tr>
    <th>#</th><th>chain</th><th>cost</th><th>time</th><th>ins</th>
    <th>utility (cost/time/ins)</th><th>score</th><th>status</th><th></th>
  </tr></thead>
  <tbody>${rows}</tbody>
</table>`;
}

export function renderAmendments(record: RequestRecord | null): string {
  if (record === null || record.amendments.length === 0) return "";
  const rows = record.amendments
    .map((entry) => {
      const ask = entry.amendment;
      const verdict =
        entry.outcome === null
          ? `<span class="badge badge-pending">Pending</span>`
          : entry.outcome.accepted
            ? `<span class="badge badge-accepted">Accepted</span> granted ${esc(String(entry.outcome.granted))} (${esc(entry.outcome.reason)})`
            : `<span class="badge badge-rejected">Rejected</span> ${esc(entry.outcome.reason)}`;
      return `<li>${esc(ask.criterion)} &rarr; ${esc(String(ask.target))} on ${esc(ask.itinerary_id)}: ${verdict}</li>`;
    })
    .join("\n");
  return `<ul class="amendments">${rows}</ul>`;
}

export function renderResult(record: RequestRecord | null): string {
  if (record === null || record.result === null) return "";
  const result = record.result;
  const note = result.reason ? ` (${esc(result.reason)})` : "";
  return `<p class="result">
    <span class="badge badge-${esc(result.status)}">${esc(title(result.status))}</span>
    reservation ${esc(result.reservation_id)} legs ${esc(result.leg_ids.join(", "))}${note}
  </p>`;
}

export interface TraceView {
  participants: string[];
  rows: { from: string; to: string; label: string }[];
}

/** Lanes and arrows in exactly the server diagram's order: participants by
 * first appearance (sender before receiver), rows in seq order. */
export function buildTraceView(events: TraceEventView[]): TraceView {
  const participants: string[] = [];
  for (const event of events) {
    for (const name of [event.sender.name, event.receiver.name]) {
      if (!participants.includes(name)) participants.push(name);
    }
  }
  const rows = events.map((event) => ({
    from: event.sender.name,
    to: event.receiver.name,
    label: `${event.performative}(${event.conversation_id})`,
  }));
  return { participants, rows };
}

export function renderTrace(events: TraceEventView[]): string {
  const view = buildTraceView(events);
  if (view.rows.length === 0) {
    return `<p class="empty">No messages yet.</p>`;
  }
  const lanes = view.participants.map((name) => `<th>${esc(name)}</th>`).join("");
  const rows = view.rows
    .map((row) => {
      const cells = view.participants
        .map((name) => {
          if (name === row.from) return `<td class="lane from">${esc(row.label)} &rarr;</td>`;
          if (name === row.to) return `<td class="lane to">&#9679;</td>`;
          return `<td class="lane"></td>`;
        })
        .join("");
      return `<tr title="${esc(row.from)} to ${esc(row.to)}">${cells}</tr>`;
    })
    .join("\n");
  return `<table class="trace"><thead><tr>${lanes}</tr></thead><tbody>${rows}</tbody></table>`;
}
