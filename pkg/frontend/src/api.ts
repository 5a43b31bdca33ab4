/** Typed client for the annotation API. The fetch implementation is
 *  injectable so tests can drive the client against a fake or a spawned
 *  real server; the UI never talks to anything but these endpoints. */

import type {
  HierarchyDocument,
  LabelRecord,
  NextResponse,
  ProgressResponse,
  TaskId,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export type SubmitOutcome =
  | { kind: "ok" }
  | { kind: "duplicate" }
  | { kind: "rejected"; status: number; error: string };

/** Thrown when the server cannot be reached at all; label submissions are
 *  queued rather than lost when this happens. */
export class NetworkUnavailable extends Error {
  constructor(cause: unknown) {
    super(`annotation API unreachable: ${String(cause)}`);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike,
  ) {}

  private async get(path: string): Promise<{ status: number; body: unknown }> {
    let response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`);
    } catch (cause) {
      throw new NetworkUnavailable(cause);
    }
    return { status: response.status, body: await response.json() };
  }

  async nextInstance(task: TaskId, annotator: string): Promise<NextResponse> {
    const { status, body } = await this.get(
      `/api/tasks/${task}/next?annotator=${encodeURIComponent(annotator)}`,
    );
    if (status !== 200) {
      throw new Error(`next-instance failed with status ${status}`);
    }
    return body as NextResponse;
  }

  async submitLabel(record: LabelRecord): Promise<SubmitOutcome> {
    let response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/api/labels`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(record),
      });
    } catch (cause) {
      throw new NetworkUnavailable(cause);
    }
    if (response.status === 200) return { kind: "ok" };
    if (response.status === 409) return { kind: "duplicate" };
    const body = (await response.json()) as { error?: string };
    return {
      kind: "rejected",
      status: response.status,
      error: body.error ?? "unknown",
    };
  }

  async progress(): Promise<ProgressResponse> {
    const { status, body } = await this.get("/api/progress");
    if (status !== 200) {
      throw new Error(`progress failed with status ${status}`);
    }
    return body as ProgressResponse;
  }

  async hierarchy(id: string): Promise<HierarchyDocument> {
    const { status, body } = await this.get(
      `/api/hierarchies/${encodeURIComponent(id)}`,
    );
    if (status !== 200) {
      throw new Error(`hierarchy ${id} failed with status ${status}`);
    }
    return body as HierarchyDocument;
  }
}
