/** DOM rendering. Every numeral span carries a provenance badge (title +
 * data-field) resolved from the API's provenance map. */
function el(tag, className = "", text = "") {
    const node = document.createElement(tag);
    if (className)
        node.className = className;
    if (text)
        node.textContent = text;
    return node;
}
export function renderTokens(tokens) {
    const span = el("span", "narration");
    for (const token of tokens) {
        if (token.badge) {
            const badge = el("span", "prov", token.text);
            badge.title = token.badge.field;
            badge.dataset.field = token.badge.field;
            badge.dataset.value = String(token.badge.value);
            span.appendChild(badge);
        }
        else {
            span.appendChild(document.createTextNode(token.text));
        }
    }
    return span;
}
export function renderChatEntry(entry) {
    const row = el("div", `turn ${entry.role}${entry.ok ? "" : " failed"}`);
    row.appendChild(el("span", "who", entry.role === "user" ? "you" : "agent"));
    row.appendChild(renderTokens(entry.tokens));
    return row;
}
export function renderUserEntry(text) {
    const row = el("div", "turn user");
    row.appendChild(el("span", "who", "you"));
    row.appendChild(el("span", "narration", text));
    return row;
}
export function renderSolutionCard(card) {
    const box = el("div", "card solution");
    const head = el("div", "card-head");
    head.appendChild(el("span", "title", `dispatch - ${card.caseName}`));
    head.appendChild(el("span", card.fresh ? "badge fresh" : "badge stale", card.fresh ? "current" : "stale"));
    box.appendChild(head);
    const dl = el("dl");
    for (const f of card.fields) {
        dl.appendChild(el("dt", "", f.label));
        const dd = el("dd");
        const badge = el("span", "prov", f.value);
        badge.title = f.field;
        badge.dataset.field = f.field;
        dd.appendChild(badge);
        dl.appendChild(dd);
    }
    box.appendChild(dl);
    return box;
}
export function renderFreshness(badges) {
    const box = el("div", "freshness");
    for (const b of badges) {
        box.appendChild(el("span", b.fresh ? "badge fresh" : "badge stale", b.text));
    }
    return box;
}
const COLUMNS = [
    { key: "rank", label: "#" },
    { key: null, label: "kind" },
    { key: "label", label: "element" },
    { key: null, label: "index" },
    { key: "score", label: "score" },
    { key: "overloads", label: "overloads" },
    { key: null, label: "worst excess %" },
    { key: null, label: "curtailed MW" },
];
export function renderRankingTable(rows, onSort) {
    const table = el("table", "ranking");
    const thead = el("thead");
    const header = el("tr");
    for (const col of COLUMNS) {
        const th = el("th", col.key ? "sortable" : "", col.label);
        if (col.key) {
            const key = col.key;
            th.addEventListener("click", () => onSort(key));
        }
        header.appendChild(th);
    }
    thead.appendChild(header);
    table.appendChild(thead);
    const tbody = el("tbody");
    for (const row of rows) {
        const tr = el("tr", "rank-row");
        tr.appendChild(el("td", "", String(row.rank)));
        tr.appendChild(el("td", "", row.kind));
        tr.appendChild(el("td", "", row.label));
        tr.appendChild(el("td", "", String(row.elementIndex)));
        for (const [value, field] of [
            [row.score, "ranking.score"],
            [String(row.overloads), "ranking.evidence.n_overloads"],
            [row.worstExcess, "ranking.evidence.worst_overload_excess_percent"],
            [row.curtailment, "ranking.evidence.curtailment_mw"],
        ]) {
            const td = el("td");
            const badge = el("span", "prov", value);
            badge.title = field;
            badge.dataset.field = field;
            td.appendChild(badge);
            tr.appendChild(td);
        }
        tr.addEventListener("click", () => {
            const existing = tr.nextElementSibling;
            if (existing && existing.classList.contains("drilldown")) {
                existing.remove();
                return;
            }
            tbody.querySelectorAll(".drilldown").forEach((n) => n.remove());
            tr.after(renderDrilldown(row));
        });
        tbody.appendChild(tr);
    }
    table.appendChild(tbody);
    return table;
}
function renderDrilldown(row) {
    const tr = el("tr", "drilldown");
    const td = el("td");
    td.colSpan = COLUMNS.length;
    td.appendChild(el("p", "justification", row.justification));
    const detail = row.detail;
    if (detail.overloaded_branches.length) {
        const ul = el("ul", "overloads");
        for (const o of detail.overloaded_branches) {
            const li = el("li");
            li.appendChild(el("span", "", `branch ${o.label} at `));
            const badge = el("span", "prov", String(o.loading_percent));
            badge.title = "result.overloaded_branches.loading_percent";
            badge.dataset.field = "result.overloaded_branches.loading_percent";
            li.appendChild(badge);
            li.appendChild(el("span", "", "% of rating"));
            ul.appendChild(li);
        }
        td.appendChild(ul);
    }
    else if (detail.status === "islanding") {
        td.appendChild(el("p", "", "islanding outage; no overload list"));
    }
    else {
        td.appendChild(el("p", "", "no overloaded branches"));
    }
    tr.appendChild(td);
    return tr;
}
export function renderWorkflow(steps) {
    const box = el("div", "workflow");
    for (const s of steps) {
        box.appendChild(el("span", `step ${s.status}`, `${s.tool_name}: ${s.status}`));
    }
    return box;
}
export function renderError(message) {
    return el("div", "error", message);
}
