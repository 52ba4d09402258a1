/** Typed client for the session service HTTP API. */

export type RingCondition = { theta: number; sigma: number };
export type ValidationCondition = { scene: string; style: string };
export type Condition = RingCondition | ValidationCondition;

export interface TrialDescriptor {
  session_id: string;
  trial_index: number;
  intensity: number;
  presentation_ms: number;
  response_options: string[];
  trial_count: number;
  max_trials: number;
  stimulus?: { left: string; right: string };
}

export interface SessionInfo {
  id: string;
  status: "active" | "complete" | "aborted";
  condition: Condition;
  participant: string;
  trial_count: number;
  max_trials: number;
}

export interface SubmitResult {
  correct: boolean;
  done: boolean;
  trial_count: number;
  max_trials: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class SessionConflict extends ApiError {}
export class SessionComplete extends ApiError {}

async function parseError(res: Response): Promise<never> {
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    /* non-JSON error body */
  }
  if (res.status === 409) {
    if (/complete/.test(detail)) throw new SessionComplete(409, detail);
    throw new SessionConflict(409, detail);
  }
  throw new ApiError(res.status, detail);
}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(
    condition: Condition,
    opts: { pest?: Record<string, unknown>; participant?: string; seed?: number } = {},
  ): Promise<{ id: string; seed: number; max_trials: number }> {
    const res = await this.fetchImpl(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        condition,
        pest: opts.pest ?? null,
        participant: opts.participant ?? "",
        seed: opts.seed ?? null,
      }),
    });
    if (!res.ok) await parseError(res);
    return res.json();
  }

  async sessionInfo(id: string): Promise<SessionInfo> {
    const res = await this.fetchImpl(this.url(`/sessions/${id}`));
    if (!res.ok) await parseError(res);
    return res.json();
  }

  async nextTrial(id: string): Promise<TrialDescriptor> {
    const res = await this.fetchImpl(this.url(`/sessions/${id}/next`));
    if (!res.ok) await parseError(res);
    return res.json();
  }

  async submitResponse(id: string, trialIndex: number, response: string): Promise<SubmitResult> {
    const res = await this.fetchImpl(this.url(`/sessions/${id}/responses`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ trial_index: trialIndex, response }),
    });
    if (!res.ok) await parseError(res);
    return res.json();
  }

  async fetchImage(path: string): Promise<Blob> {
    const res = await this.fetchImpl(this.url(path));
    if (!res.ok) await parseError(res);
    return res.blob();
  }

  exportUrl(id: string, format: "csv" | "json" = "csv"): string {
    return this.url(`/sessions/${id}/export?format=${format}`);
  }
}
