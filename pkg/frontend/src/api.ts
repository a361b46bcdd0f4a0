/**
 * Typed client for the segmentation service.  The fetch implementation is
 * injectable so request shaping can be tested without a server.
 */

import type {
  BatchStatus,
  BuildConfigDto,
  ServerEvent,
  SessionCreated,
  SessionStatus,
  StrokeDto,
  UpdateOptionsDto,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function expectOk(resp: Response): Promise<Response> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return resp;
}

export class Client {
  constructor(
    public baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSession(image: Blob, filename: string,
                      config: Partial<BuildConfigDto>): Promise<SessionCreated> {
    const form = new FormData();
    form.append("image", image, filename);
    form.append("config", JSON.stringify(config));
    const resp = await expectOk(await this.fetchImpl(this.url("/sessions"),
      { method: "POST", body: form }));
    return resp.json();
  }

  async status(sessionId: string): Promise<SessionStatus> {
    const resp = await expectOk(
      await this.fetchImpl(this.url(`/sessions/${sessionId}`)));
    return resp.json();
  }

  async submitStrokes(sessionId: string, strokes: StrokeDto[],
                      options?: UpdateOptionsDto): Promise<number> {
    const resp = await expectOk(await this.fetchImpl(
      this.url(`/sessions/${sessionId}/strokes`),
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(options ? { strokes, options } : { strokes }),
      }));
    const body = (await resp.json()) as { revision: number };
    return body.revision;
  }

  /** Blocks server-side until a result at or past `rev` exists. */
  async getResult(sessionId: string, kind: "segmentation" | "probability" | "marks",
                  rev = 0, layer = 1): Promise<{ blob: Blob; revision: number }> {
    const params = new URLSearchParams({
      kind, rev: String(rev), layer: String(layer),
    });
    const resp = await expectOk(await this.fetchImpl(
      this.url(`/sessions/${sessionId}/result?${params}`)));
    const revision = Number(resp.headers.get("X-Revision") ?? "0");
    return { blob: await resp.blob(), revision };
  }

  async undo(sessionId: string): Promise<number> {
    const resp = await expectOk(await this.fetchImpl(
      this.url(`/sessions/${sessionId}/undo`), { method: "POST" }));
    return ((await resp.json()) as { revision: number }).revision;
  }

  async redo(sessionId: string): Promise<number> {
    const resp = await expectOk(await this.fetchImpl(
      this.url(`/sessions/${sessionId}/redo`), { method: "POST" }));
    return ((await resp.json()) as { revision: number }).revision;
  }

  async importMarks(sessionId: string, png: Blob): Promise<number> {
    const resp = await expectOk(await this.fetchImpl(
      this.url(`/sessions/${sessionId}/marks`),
      { method: "POST", body: png }));
    return ((await resp.json()) as { revision: number }).revision;
  }

  async exportModel(sessionId: string): Promise<Blob> {
    const resp = await expectOk(await this.fetchImpl(
      this.url(`/sessions/${sessionId}/export`), { method: "POST" }));
    return resp.blob();
  }

  imageUrl(sessionId: string): string {
    return this.url(`/sessions/${sessionId}/image`);
  }

  eventsUrl(sessionId: string): string {
    return this.url(`/sessions/${sessionId}/events`);
  }

  async startBatch(model: Blob, stack: Blob, flags: Record<string, string | number>):
      Promise<string> {
    const form = new FormData();
    form.append("model", model, "model.bin");
    form.append("stack", stack, "stack.tif");
    for (const [key, value] of Object.entries(flags)) {
      form.append(key, String(value));
    }
    const resp = await expectOk(await this.fetchImpl(this.url("/batch"),
      { method: "POST", body: form }));
    return ((await resp.json()) as { job_id: string }).job_id;
  }

  async batchStatus(jobId: string): Promise<BatchStatus> {
    const resp = await expectOk(await this.fetchImpl(this.url(`/batch/${jobId}`)));
    return resp.json();
  }

  batchDownloadUrl(jobId: string): string {
    return this.url(`/batch/${jobId}/download`);
  }
}

/**
 * Subscribe to the session's server-sent events with the browser-native
 * EventSource.  Returns an unsubscribe function.
 */
export function subscribeEvents(client: Client, sessionId: string,
                                onEvent: (event: ServerEvent) => void,
                                onError?: () => void): () => void {
  const source = new EventSource(client.eventsUrl(sessionId));
  source.onmessage = (message) => {
    onEvent(JSON.parse(message.data) as ServerEvent);
  };
  if (onError) source.onerror = onError;
  return () => source.close();
}
