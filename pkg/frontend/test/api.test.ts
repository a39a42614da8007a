import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, TurnInProgressError } from "../src/api.js";

function fakeFetch(status: number, body: unknown): typeof fetch {
  return (async () =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    })) as typeof fetch;
}

describe("ApiClient", () => {
  it("returns parsed payloads on 200", async () => {
    const client = new ApiClient("", fakeFetch(200, { session_id: "abc", summary: {}, cases: [] }));
    const created = await client.createSession("case14");
    expect(created.session_id).toBe("abc");
  });

  it("maps 409 to TurnInProgressError", async () => {
    const client = new ApiClient("", fakeFetch(409, { detail: "busy" }));
    await expect(client.chat("s", "hello")).rejects.toBeInstanceOf(TurnInProgressError);
  });

  it("maps other failures to ApiError with the service detail", async () => {
    const client = new ApiClient("", fakeFetch(404, { error: 404, detail: "unknown session 'x'" }));
    await expect(client.summary("x")).rejects.toMatchObject({
      status: 404,
      message: "unknown session 'x'",
    });
    const err = await client.summary("x").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
  });

  it("treats missing artifacts (404) as null for panels", async () => {
    const client = new ApiClient("", fakeFetch(404, { detail: "no dispatch yet" }));
    expect(await client.solution("s")).toBeNull();
    expect(await client.contingencies("s")).toBeNull();
  });
});
