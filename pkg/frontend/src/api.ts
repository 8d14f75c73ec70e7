/** Typed client for the alignment service wire protocol. */

export interface StepSizes {
  mm: number;
  rad: number;
}

export interface SessionState {
  keyframes: number;
  params: number[];
  step: StepSizes;
  opacity: number;
}

export interface CommitResult {
  path: string;
  matrix: number[];
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

/** Thin wrapper over the documented endpoints; carries no client state. */
export class AlignApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (u, i) => fetch(u, i),
  ) {}

  async session(): Promise<SessionState> {
    return asJson(await this.fetchFn(`${this.base}/api/session`));
  }

  /** Overlay PNG for one keyframe; the caller owns the returned blob. */
  async render(keyframe: number, mode: string): Promise<Blob> {
    const resp = await this.fetchFn(
      `${this.base}/api/render/${keyframe}?mode=${encodeURIComponent(mode)}`,
    );
    if (!resp.ok) throw new ApiError(resp.status, "render failed");
    return resp.blob();
  }

  async nudge(delta: number[]): Promise<SessionState> {
    return asJson(
      await this.fetchFn(`${this.base}/api/nudge`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ delta }),
      }),
    );
  }

  async setOpacity(value: number): Promise<SessionState> {
    return asJson(
      await this.fetchFn(`${this.base}/api/opacity`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ value }),
      }),
    );
  }

  async commit(): Promise<CommitResult> {
    return asJson(
      await this.fetchFn(`${this.base}/api/commit`, { method: "POST" }),
    );
  }
}
