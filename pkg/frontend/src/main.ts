/** Console wiring: create a session, drive chat turns, keep the solution card,
 * freshness badges, and ranking table in sync with the API. */

import { ApiClient, TurnInProgressError } from "./api.js";
import {
  chatEntryFromReply,
  freshnessBadges,
  rankingRows,
  solutionCard,
  sortRows,
  type RankingRow,
  type SortKey,
} from "./viewmodel.js";
import {
  renderChatEntry,
  renderError,
  renderFreshness,
  renderRankingTable,
  renderSolutionCard,
  renderUserEntry,
  renderWorkflow,
} from "./render.js";

const api = new ApiClient("");

interface ConsoleState {
  sessionId: string | null;
  rows: RankingRow[];
  sortKey: SortKey;
  descending: boolean;
}

const state: ConsoleState = { sessionId: null, rows: [], sortKey: "rank", descending: false };

function $(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function refreshPanels(): Promise<void> {
  if (!state.sessionId) return;
  const summary = await api.summary(state.sessionId);
  const fresh = $("freshness");
  fresh.replaceChildren(renderFreshness(freshnessBadges(summary)));
  $("session-meta").textContent =
    `${summary.case} | diffs ${summary.diff_count} | v${summary.version}`;

  const solution = await api.solution(state.sessionId);
  const card = $("solution");
  if (solution) {
    card.replaceChildren(renderSolutionCard(solutionCard(solution)));
  } else {
    card.replaceChildren(renderError("no dispatch yet - ask for a solve"));
  }

  const sweep = await api.contingencies(state.sessionId, 5);
  const rank = $("ranking");
  if (sweep) {
    state.rows = rankingRows(sweep);
    drawRanking();
    $("ranking-meta").textContent =
      `${sweep.result_count} outages screened (${sweep.scope}); ` +
      `secure ${sweep.summary.secure}, violations ${sweep.summary.violations}, ` +
      `islanding ${sweep.summary.islanding}, diverged ${sweep.summary.diverged}` +
      (sweep.fresh ? "" : " - stale");
  } else {
    rank.replaceChildren(renderError("no contingency analysis yet"));
    $("ranking-meta").textContent = "";
  }
}

function drawRanking(): void {
  const rank = $("ranking");
  const rows = sortRows(state.rows, state.sortKey, state.descending);
  rank.replaceChildren(renderRankingTable(rows, (key) => {
    state.descending = key === state.sortKey ? !state.descending : key === "score";
    state.sortKey = key;
    drawRanking();
  }));
}

async function sendUtterance(utterance: string): Promise<void> {
  if (!state.sessionId || !utterance.trim()) return;
  const log = $("chat-log");
  log.appendChild(renderUserEntry(utterance));
  const busy = $("busy");
  busy.textContent = "working...";
  try {
    const reply = await api.chat(state.sessionId, utterance);
    log.appendChild(renderChatEntry(chatEntryFromReply(reply)));
    $("workflow").replaceChildren(renderWorkflow(reply.workflow.steps));
  } catch (err) {
    if (err instanceof TurnInProgressError) {
      log.appendChild(renderError("turn in progress - wait for the current one"));
    } else {
      log.appendChild(renderError(String(err)));
    }
  } finally {
    busy.textContent = "";
    log.scrollTop = log.scrollHeight;
    await refreshPanels().catch(() => undefined);
  }
}

async function boot(): Promise<void> {
  const caseSelect = $("case-select") as HTMLSelectElement;
  const created = await api.createSession(caseSelect.value);
  state.sessionId = created.session_id;
  $("session-meta").textContent = `${created.summary.case} | new session ${created.session_id}`;

  $("chat-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = $("chat-input") as HTMLInputElement;
    const text = input.value;
    input.value = "";
    void sendUtterance(text);
  });

  $("whatif-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const bus = ($("whatif-bus") as HTMLInputElement).value;
    const mw = ($("whatif-mw") as HTMLInputElement).value;
    if (bus && mw) {
      void sendUtterance(`Increase the load for bus ${bus} to ${mw} MW`);
    }
  });

  caseSelect.addEventListener("change", () => {
    void (async () => {
      const next = await api.createSession(caseSelect.value);
      state.sessionId = next.session_id;
      $("chat-log").replaceChildren();
      await refreshPanels();
    })();
  });

  await refreshPanels();
}

document.addEventListener("DOMContentLoaded", () => {
  void boot().catch((err) => {
    document.body.prepend(renderError(`failed to reach the service: ${err}`));
  });
});
