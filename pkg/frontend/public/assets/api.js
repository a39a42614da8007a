/** Typed client for the workbench HTTP API. The console performs no analysis
 * of its own: every number it shows round-trips from these payloads. */
/** Thrown when the session already has a turn in flight (HTTP 409). */
export class TurnInProgressError extends Error {
    constructor() {
        super("a turn is already in progress for this session");
    }
}
export class ApiError extends Error {
    status;
    constructor(status, detail) {
        super(detail);
        this.status = status;
    }
}
async function expectJson(resp) {
    if (resp.status === 409)
        throw new TurnInProgressError();
    const body = await resp.json();
    if (!resp.ok) {
        throw new ApiError(resp.status, (body && body.detail) || resp.statusText);
    }
    return body;
}
export class ApiClient {
    base;
    fetchFn;
    constructor(base = "", fetchFn = fetch) {
        this.base = base;
        this.fetchFn = fetchFn;
    }
    url(path) {
        return `${this.base}${path}`;
    }
    async createSession(caseName) {
        const resp = await this.fetchFn(this.url("/api/sessions"), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ case_name: caseName }),
        });
        return expectJson(resp);
    }
    async summary(sessionId) {
        return expectJson(await this.fetchFn(this.url(`/api/sessions/${sessionId}`)));
    }
    async chat(sessionId, utterance) {
        const resp = await this.fetchFn(this.url(`/api/sessions/${sessionId}/chat`), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ utterance }),
        });
        return expectJson(resp);
    }
    async solution(sessionId) {
        const resp = await this.fetchFn(this.url(`/api/sessions/${sessionId}/solution`));
        if (resp.status === 404)
            return null;
        return expectJson(resp);
    }
    async contingencies(sessionId, top = 5) {
        const resp = await this.fetchFn(this.url(`/api/sessions/${sessionId}/contingencies?top=${top}`));
        if (resp.status === 404)
            return null;
        return expectJson(resp);
    }
}
