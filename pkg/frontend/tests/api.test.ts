import { describe, expect, it } from "vitest";

import { ApiError, Client } from "../src/api.js";

interface Recorded {
  url: string;
  init?: RequestInit;
}

function mockFetch(status: number, body: unknown,
                   headers: Record<string, string> = {}) {
  const calls: Recorded[] = [];
  const impl = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const payload = typeof body === "string" ? body : JSON.stringify(body);
    return new Response(payload, {
      status,
      headers: { "Content-Type": "application/json", ...headers },
    });
  };
  return { impl, calls };
}

describe("Client request shaping", () => {
  it("strips trailing slash from the base url", () => {
    const client = new Client("http://x:1/");
    expect(client.imageUrl("abc")).toBe("http://x:1/sessions/abc/image");
  });

  it("posts strokes with options only when given", async () => {
    const { impl, calls } = mockFetch(200, { revision: 7 });
    const client = new Client("", impl);
    const revision = await client.submitStrokes("s1",
      [{ points: [[1, 2], [3, 4]], radius: 2, cls: 1 }]);
    expect(revision).toBe(7);
    const body = JSON.parse(calls[0].init?.body as string);
    expect(body).toEqual({ strokes: [{ points: [[1, 2], [3, 4]], radius: 2, cls: 1 }] });

    await client.submitStrokes("s1", [],
      { steps: 2, binarise: true, overwrite: false, epsilon: 1e-6 });
    const second = JSON.parse(calls[1].init?.body as string);
    expect(second.options).toEqual(
      { steps: 2, binarise: true, overwrite: false, epsilon: 1e-6 });
  });

  it("encodes result query parameters and reads the revision header", async () => {
    const { impl, calls } = mockFetch(200, "png-bytes", { "X-Revision": "11" });
    const client = new Client("", impl);
    const { revision } = await client.getResult("s1", "probability", 4, 2);
    expect(revision).toBe(11);
    expect(calls[0].url).toBe("/sessions/s1/result?kind=probability&rev=4&layer=2");
  });

  it("builds multipart session creation", async () => {
    const { impl, calls } = mockFetch(200, {
      session_id: "s", width: 4, height: 3, channels: 1, n_classes: 2,
    });
    const client = new Client("", impl);
    await client.createSession(new Blob([new Uint8Array([1])]), "a.png",
      { patch_side: 5 });
    const form = calls[0].init?.body as FormData;
    expect(form.get("config")).toBe('{"patch_side":5}');
    expect((form.get("image") as File).name).toBe("a.png");
  });

  it("surfaces server error details", async () => {
    const { impl } = mockFetch(400, { detail: "patch side too large" });
    const client = new Client("", impl);
    await expect(client.status("s")).rejects.toThrowError(ApiError);
    await expect(client.status("s")).rejects.toThrow("patch side too large");
  });

  it("shapes batch form flags", async () => {
    const { impl, calls } = mockFetch(200, { job_id: "j1" });
    const client = new Client("", impl);
    const job = await client.startBatch(new Blob([]), new Blob([]),
      { min_component: 100, centres_class: 2 });
    expect(job).toBe("j1");
    const form = calls[0].init?.body as FormData;
    expect(form.get("min_component")).toBe("100");
    expect(form.get("centres_class")).toBe("2");
  });
});
