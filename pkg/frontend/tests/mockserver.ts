/** In-memory stand-in for the session service, speaking the same HTTP
 * contract through a fetch-compatible function. It enforces the server-side
 * semantics the client must honor: idempotent GET /next, exactly-once
 * responses per trial index (409 otherwise), 409 once complete.
 */

export interface RecordedResponse {
  trialIndex: number;
  response: string;
}

export class MockServer {
  pending = 0;
  maxTrials: number;
  accepted: RecordedResponse[] = [];
  postAttempts = 0;
  nextCalls = 0;
  imageFetches: string[] = [];
  failNextImageFetches = 0;

  constructor(maxTrials = 60, readonly sessionId = "s1") {
    this.maxTrials = maxTrials;
  }

  get done(): boolean {
    return this.pending >= this.maxTrials;
  }

  private json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  descriptor() {
    return {
      session_id: this.sessionId,
      trial_index: this.pending,
      intensity: 1.0 + this.pending * 0.01,
      presentation_ms: 1500,
      response_options: ["peaks", "troughs"],
      trial_count: this.pending,
      max_trials: this.maxTrials,
      stimulus: {
        left: `/stimuli/t${this.pending}_L.png`,
        right: `/stimuli/t${this.pending}_R.png`,
      },
    };
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = String(input);
    const method = init?.method ?? "GET";
    if (url.endsWith("/next") && method === "GET") {
      this.nextCalls += 1;
      if (this.done) return this.json(409, { detail: "session already complete" });
      return this.json(200, this.descriptor());
    }
    if (url.endsWith("/responses") && method === "POST") {
      this.postAttempts += 1;
      const body = JSON.parse(String(init?.body));
      if (this.done) return this.json(409, { detail: "session already complete" });
      if (body.trial_index !== this.pending) {
        return this.json(409, { detail: `trial index ${body.trial_index} is not pending` });
      }
      if (!["peaks", "troughs"].includes(body.response)) {
        return this.json(400, { detail: "bad response label" });
      }
      this.accepted.push({ trialIndex: body.trial_index, response: body.response });
      this.pending += 1;
      return this.json(200, {
        correct: body.response === "peaks",
        done: this.done,
        trial_count: this.pending,
        max_trials: this.maxTrials,
      });
    }
    if (url.includes("/stimuli/")) {
      this.imageFetches.push(url);
      if (this.failNextImageFetches > 0) {
        this.failNextImageFetches -= 1;
        return new Response("gone", { status: 404 });
      }
      return new Response(new Blob([new Uint8Array(4)]), { status: 200 });
    }
    if (/\/sessions\/[^/]+$/.test(url) && method === "GET") {
      return this.json(200, {
        id: this.sessionId,
        status: this.done ? "complete" : "active",
        condition: { theta: 0, sigma: 3 },
        participant: "test",
        trial_count: this.pending,
        max_trials: this.maxTrials,
      });
    }
    return this.json(404, { detail: `unhandled ${method} ${url}` });
  };
}

export function testImage(width = 4, height = 4, value = 128) {
  return {
    width,
    height,
    data: new Uint8ClampedArray(width * height).fill(value),
  };
}
