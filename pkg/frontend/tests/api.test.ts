import { describe, expect, it, vi } from "vitest";

import { ChatApi, ServiceError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ChatApi", () => {
  it("creates a session via POST /sessions", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ session_id: "abc" }, 201));
    const api = new ChatApi("http://svc:8077", fetchMock);
    expect(await api.createSession()).toBe("abc");
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("http://svc:8077/sessions");
    expect(init?.method).toBe("POST");
  });

  it("strips a trailing slash from the base URL", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ status: "ok", model_info: {} }));
    await new ChatApi("http://svc:8077/", fetchMock).health();
    expect(fetchMock.mock.calls[0][0]).toBe("http://svc:8077/health");
  });

  it("sends message text with n and select options", async () => {
    const payload = {
      candidates: [
        { text: "hi there", mtld: 2.0, mattr: 1.0, combined: 1.2 },
      ],
      selected_index: 0,
      reply: "hi there",
    };
    const fetchMock = vi.fn(async () => jsonResponse(payload));
    const api = new ChatApi("http://svc", fetchMock);
    const out = await api.sendMessage("s1", "hello", { n: 3, select: "lexdiv" });
    expect(out).toEqual(payload);
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("http://svc/sessions/s1/message");
    expect(JSON.parse(String(init?.body))).toEqual({
      text: "hello",
      n: 3,
      select: "lexdiv",
    });
  });

  it("surfaces the service's error detail with the status code", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ detail: "unknown session" }, 404),
    );
    const api = new ChatApi("http://svc", fetchMock);
    const err = await api.history("nope").catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(404);
    expect(err.message).toBe("unknown session");
  });

  it("maps network failure to status 0", async () => {
    const fetchMock = vi.fn(async () => {
      throw new TypeError("fetch failed");
    });
    const api = new ChatApi("http://down", fetchMock);
    const err = await api.health().catch((e) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect(err.status).toBe(0);
    expect(err.message).toMatch(/unreachable/);
  });

  it("returns history turns in order", async () => {
    const turns = [
      { speaker: "user", text: "hi" },
      { speaker: "agent", text: "hello !" },
    ];
    const fetchMock = vi.fn(async () => jsonResponse({ turns }));
    const api = new ChatApi("http://svc", fetchMock);
    expect(await api.history("s1")).toEqual(turns);
  });
});
