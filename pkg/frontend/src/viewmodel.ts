/** Pure view-model construction: splits narrated text into provenance-badged
 * tokens and shapes API payloads for rendering. No numeric computation. */

import type {
  ChatReply,
  ContingencyReply,
  ProvenanceEntry,
  RankingEntry,
  SessionSummary,
  SolutionReply,
} from "./api.js";

export interface TextToken {
  text: string;
  badge: ProvenanceEntry | null;
}

const NUMERAL = /(?<![\w.])-?\d[\d,]*(?:\.\d+)?(?![\w])/g;

/** Split a narrated response so every numeral token carries its provenance
 * entry; non-numeral stretches pass through untouched. */
export function tokenize(response: string, provenance: ProvenanceEntry[]): TextToken[] {
  const index = new Map<string, ProvenanceEntry>();
  for (const entry of provenance) {
    if (!index.has(entry.numeral)) index.set(entry.numeral, entry);
    const bare = entry.numeral.replace(/,/g, "");
    if (!index.has(bare)) index.set(bare, entry);
  }
  const tokens: TextToken[] = [];
  let cursor = 0;
  for (const match of response.matchAll(NUMERAL)) {
    const start = match.index ?? 0;
    if (start > cursor) tokens.push({ text: response.slice(cursor, start), badge: null });
    const numeral = match[0];
    tokens.push({
      text: numeral,
      badge: index.get(numeral) ?? index.get(numeral.replace(/,/g, "")) ?? null,
    });
    cursor = start + numeral.length;
  }
  if (cursor < response.length) tokens.push({ text: response.slice(cursor), badge: null });
  return tokens;
}

/** Numerals in a tokenized response that carry no provenance badge. */
export function orphanNumerals(tokens: TextToken[]): string[] {
  const probe = /^-?\d[\d,]*(?:\.\d+)?$/;
  return tokens.filter((t) => t.badge === null && probe.test(t.text)).map((t) => t.text);
}

export interface ChatEntry {
  role: "user" | "agent";
  tokens: TextToken[];
  ok: boolean;
}

export function chatEntryFromReply(reply: ChatReply): ChatEntry {
  return { role: "agent", tokens: tokenize(reply.response, reply.provenance), ok: reply.ok };
}

export interface SolutionCard {
  caseName: string;
  fields: { label: string; value: string; field: string }[];
  fresh: boolean;
}

export function solutionCard(reply: SolutionReply): SolutionCard {
  const s = reply.solution;
  const fmt = (v: unknown) => String(v);
  return {
    caseName: String(s.case_name),
    fresh: reply.fresh,
    fields: [
      { label: "objective cost ($/h)", value: fmt(s.objective_cost), field: "acopf.objective_cost" },
      { label: "losses (MW)", value: fmt(s.losses_mw), field: "acopf.losses_mw" },
      { label: "min voltage (p.u.)", value: fmt(s.min_voltage_pu), field: "acopf.min_voltage_pu" },
      { label: "max voltage (p.u.)", value: fmt(s.max_voltage_pu), field: "acopf.max_voltage_pu" },
      { label: "iterations", value: fmt(s.iterations), field: "acopf.iterations" },
    ],
  };
}

export interface RankingRow {
  rank: number;
  kind: string;
  label: string;
  elementIndex: number;
  score: string;
  overloads: number;
  worstExcess: string;
  curtailment: string;
  justification: string;
  detail: RankingEntry;
}

export type SortKey = "rank" | "score" | "label" | "overloads";

export function rankingRows(reply: ContingencyReply): RankingRow[] {
  return reply.ranking.map((entry, i) => ({
    rank: i + 1,
    kind: entry.contingency.outage_kind,
    label: entry.contingency.label,
    elementIndex: entry.contingency.element_index,
    score: String(entry.score),
    overloads: entry.evidence.n_overloads,
    worstExcess: String(entry.evidence.worst_overload_excess_percent),
    curtailment: String(entry.evidence.curtailment_mw),
    justification: entry.justification,
    detail: entry,
  }));
}

/** Reordering only: comparison happens on values the API already provided. */
export function sortRows(rows: RankingRow[], key: SortKey, descending: boolean): RankingRow[] {
  const sorted = [...rows].sort((a, b) => {
    const av = key === "label" ? a.label : key === "rank" ? a.rank
      : key === "overloads" ? a.overloads : Number(a.score);
    const bv = key === "label" ? b.label : key === "rank" ? b.rank
      : key === "overloads" ? b.overloads : Number(b.score);
    if (av < bv) return descending ? 1 : -1;
    if (av > bv) return descending ? -1 : 1;
    return a.elementIndex - b.elementIndex;
  });
  return sorted;
}

export interface FreshnessBadge {
  kind: string;
  fresh: boolean;
  text: string;
}

export function freshnessBadges(summary: SessionSummary): FreshnessBadge[] {
  return Object.entries(summary.artifacts).map(([kind, st]) => ({
    kind,
    fresh: st.fresh,
    text: st.fresh ? `${kind}: current` : `${kind}: stale`,
  }));
}
