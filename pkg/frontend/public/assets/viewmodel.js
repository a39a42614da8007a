/** Pure view-model construction: splits narrated text into provenance-badged
 * tokens and shapes API payloads for rendering. No numeric computation. */
const NUMERAL = /(?<![\w.])-?\d[\d,]*(?:\.\d+)?(?![\w])/g;
/** Split a narrated response so every numeral token carries its provenance
 * entry; non-numeral stretches pass through untouched. */
export function tokenize(response, provenance) {
    const index = new Map();
    for (const entry of provenance) {
        if (!index.has(entry.numeral))
            index.set(entry.numeral, entry);
        const bare = entry.numeral.replace(/,/g, "");
        if (!index.has(bare))
            index.set(bare, entry);
    }
    const tokens = [];
    let cursor = 0;
    for (const match of response.matchAll(NUMERAL)) {
        const start = match.index ?? 0;
        if (start > cursor)
            tokens.push({ text: response.slice(cursor, start), badge: null });
        const numeral = match[0];
        tokens.push({
            text: numeral,
            badge: index.get(numeral) ?? index.get(numeral.replace(/,/g, "")) ?? null,
        });
        cursor = start + numeral.length;
    }
    if (cursor < response.length)
        tokens.push({ text: response.slice(cursor), badge: null });
    return tokens;
}
/** Numerals in a tokenized response that carry no provenance badge. */
export function orphanNumerals(tokens) {
    const probe = /^-?\d[\d,]*(?:\.\d+)?$/;
    return tokens.filter((t) => t.badge === null && probe.test(t.text)).map((t) => t.text);
}
export function chatEntryFromReply(reply) {
    return { role: "agent", tokens: tokenize(reply.response, reply.provenance), ok: reply.ok };
}
export function solutionCard(reply) {
    const s = reply.solution;
    const fmt = (v) => String(v);
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
export function rankingRows(reply) {
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
export function sortRows(rows, key, descending) {
    const sorted = [...rows].sort((a, b) => {
        const av = key === "label" ? a.label : key === "rank" ? a.rank
            : key === "overloads" ? a.overloads : Number(a.score);
        const bv = key === "label" ? b.label : key === "rank" ? b.rank
            : key === "overloads" ? b.overloads : Number(b.score);
        if (av < bv)
            return descending ? 1 : -1;
        if (av > bv)
            return descending ? -1 : 1;
        return a.elementIndex - b.elementIndex;
    });
    return sorted;
}
export function freshnessBadges(summary) {
    return Object.entries(summary.artifacts).map(([kind, st]) => ({
        kind,
        fresh: st.fresh,
        text: st.fresh ? `${kind}: current` : `${kind}: stale`,
    }));
}
