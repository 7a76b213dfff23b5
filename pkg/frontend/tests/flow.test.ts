import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { AnnotationFlow } from "../src/flow.js";

/** In-memory fake of the annotation service, mounted on global fetch. */
class FakeService {
  tests = [
    { test_id: "t0", items: ["a", "b", "c"] },
    { test_id: "t1", items: ["d", "e", "f"] },
  ];
  answers = new Map<string, number>();
  failNextSubmit = 0; // network failures to inject

  handle(url: string, init?: RequestInit): Response {
    const json = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      });
    if (url.endsWith("/api/session")) {
      return json(200, { token: "tok", target: this.tests.length });
    }
    if (url.endsWith("/next")) {
      const pending = this.tests.find((t) => !this.answers.has(t.test_id));
      if (!pending) return json(200, { complete: true });
      return json(200, {
        complete: false,
        test_id: pending.test_id,
        items: pending.items.map((sid) => ({
          sample_id: sid,
          thumb_url: `/api/item/${sid}/thumb`,
        })),
      });
    }
    if (url.endsWith("/answer")) {
      if (this.failNextSubmit > 0) {
        this.failNextSubmit -= 1;
        throw new TypeError("network down");
      }
      const body = JSON.parse(String(init!.body)) as { test_id: string; chosen: number };
      const prior = this.answers.get(body.test_id);
      if (prior !== undefined) {
        if (prior === body.chosen) return json(200, { status: "ok", duplicate: true });
        return json(409, { code: "conflicting_answer", message: "differs" });
      }
      if (body.chosen < 0 || body.chosen > 2) {
        return json(422, { code: "bad_choice", message: "out of range" });
      }
      this.answers.set(body.test_id, body.chosen);
      return json(200, { status: "ok", duplicate: false });
    }
    if (url.endsWith("/progress")) {
      return json(200, { answered: this.answers.size, target: this.tests.length });
    }
    return json(404, { code: "not_found", message: url });
  }
}

let service: FakeService;

beforeEach(() => {
  service = new FakeService();
  vi.stubGlobal("fetch", async (url: string, init?: RequestInit) =>
    service.handle(String(url), init),
  );
});

afterEach(() => vi.unstubAllGlobals());

describe("AnnotationFlow", () => {
  it("starts a session and shows the first test", async () => {
    const flow = new AnnotationFlow(new ApiClient());
    await flow.start();
    expect(flow.state.kind).toBe("test");
    expect(flow.target).toBe(2);
    if (flow.state.kind === "test") {
      expect(flow.state.testId).toBe("t0");
      expect(flow.state.items).toHaveLength(3);
      expect(flow.state.selected).toBeNull();
    }
  });

  it("requires exactly one selection before submit", async () => {
    const flow = new AnnotationFlow(new ApiClient());
    await flow.start();
    expect(flow.canSubmit()).toBe(false);
    flow.select(1);
    expect(flow.canSubmit()).toBe(true);
    flow.select(2); // moves the selection, still exactly one
    if (flow.state.kind === "test") expect(flow.state.selected).toBe(2);
  });

  it("submits and advances through to completion", async () => {
    const flow = new AnnotationFlow(new ApiClient());
    await flow.start();
    flow.select(0);
    await flow.submit();
    expect(flow.state.kind).toBe("test");
    if (flow.state.kind === "test") expect(flow.state.testId).toBe("t1");
    flow.select(2);
    await flow.submit();
    expect(flow.state.kind).toBe("complete");
    expect(flow.answered).toBe(2);
    expect(service.answers.get("t0")).toBe(0);
    expect(service.answers.get("t1")).toBe(2);
  });

  it("retries an identical payload on network failure without duplicating", async () => {
    const flow = new AnnotationFlow(new ApiClient());
    await flow.start();
    flow.select(1);
    service.failNextSubmit = 1;
    await flow.submit();
    expect(flow.state.kind).toBe("test"); // advanced past t0
    expect(service.answers.size).toBe(1);
    expect(service.answers.get("t0")).toBe(1);
  });

  it("surfaces an error state when the service stays unreachable", async () => {
    const flow = new AnnotationFlow(new ApiClient(), 1);
    await flow.start();
    flow.select(0);
    service.failNextSubmit = 99;
    await flow.submit();
    expect(flow.state.kind).toBe("error");
    expect(service.answers.size).toBe(0);
  });

  it("reload with the same token re-fetches the leased test", async () => {
    const flow = new AnnotationFlow(new ApiClient());
    await flow.start();
    const firstId = flow.state.kind === "test" ? flow.state.testId : "";
    const reloaded = new AnnotationFlow(new ApiClient());
    await reloaded.start("tok");
    expect(reloaded.state.kind).toBe("test");
    if (reloaded.state.kind === "test") expect(reloaded.state.testId).toBe(firstId);
  });

  it("ignores out-of-range selections", async () => {
    const flow = new AnnotationFlow(new ApiClient());
    await flow.start();
    flow.select(7);
    expect(flow.canSubmit()).toBe(false);
  });
});
