/** Client session state machine.
 *
 * The server is the single source of truth: this runner never advances the
 * trial index on its own, it only reflects acknowledged server state, so a
 * page reload (or a lost response) resyncs to exactly the server's pending
 * trial. Responses are accepted only in the awaiting-response phase and the
 * phase flips synchronously on the first accepted key, so key repeat or
 * double presses cannot reach the server twice for one trial index.
 */

import { ServiceClient, SessionComplete, SessionConflict, TrialDescriptor } from "./api";
import { composite, GrayImage, ImageDataLike, ViewMode } from "./anaglyph";
import { FrameScheduler, presentForDuration } from "./timing";

export type Phase =
  | "idle"
  | "loading"
  | "armed"
  | "presenting"
  | "awaiting-response"
  | "submitting"
  | "done"
  | "error";

export interface ClientSessionView {
  sessionId: string;
  phase: Phase;
  trial: TrialDescriptor | null;
  trialCount: number;
  maxTrials: number;
  lastCorrect: boolean | null;
  exportUrl: string | null;
  errorMessage: string | null;
}

export interface AuditEntry {
  trialIndex: number;
  measuredMs: number;
  response: string;
}

export interface Presenter {
  show(img: ImageDataLike): void;
  blank(): void;
}

export interface RunnerDeps {
  client: ServiceClient;
  loadImage(path: string): Promise<GrayImage>;
  scheduler: FrameScheduler;
  presenter: Presenter;
  mode: ViewMode;
  onUpdate?(view: ClientSessionView): void;
}

const TRIGGER_KEYS = new Set([" ", "Enter"]);

export function responseForKey(key: string, options: string[]): string | null {
  const maps: Record<string, Record<string, string>> = {
    "peaks,troughs": { ArrowUp: "peaks", ArrowDown: "troughs", p: "peaks", t: "troughs" },
    "left,right": { ArrowLeft: "left", ArrowRight: "right", l: "left", r: "right" },
  };
  const table = maps[options.join(",")];
  return table ? table[key] ?? null : null;
}

export class SessionRunner {
  readonly audit: AuditEntry[] = [];
  private view: ClientSessionView;
  private images: { left: GrayImage; right: GrayImage } | null = null;
  private lastMeasuredMs: number | null = null;

  constructor(private readonly deps: RunnerDeps) {
    this.view = {
      sessionId: "",
      phase: "idle",
      trial: null,
      trialCount: 0,
      maxTrials: 0,
      lastCorrect: null,
      exportUrl: null,
      errorMessage: null,
    };
  }

  get state(): ClientSessionView {
    return { ...this.view };
  }

  private update(patch: Partial<ClientSessionView>): void {
    this.view = { ...this.view, ...patch };
    this.deps.onUpdate?.(this.state);
  }

  /** Attach to a session (new or resumed) and fetch its pending trial. */
  async start(sessionId: string): Promise<void> {
    this.update({ sessionId, phase: "loading", errorMessage: null });
    await this.loadPendingTrial();
  }

  private async loadPendingTrial(): Promise<void> {
    const { client } = this.deps;
    const sid = this.view.sessionId;
    try {
      const trial = await client.nextTrial(sid);
      if (!trial.stimulus) throw new Error("descriptor carries no stimulus URLs");
      const [left, right] = await Promise.all([
        this.deps.loadImage(trial.stimulus.left),
        this.deps.loadImage(trial.stimulus.right),
      ]);
      this.images = { left, right };
      this.update({
        trial,
        trialCount: trial.trial_count,
        maxTrials: trial.max_trials,
        phase: "armed",
      });
    } catch (err) {
      if (err instanceof SessionComplete) {
        this.finish();
        return;
      }
      this.update({
        phase: "error",
        errorMessage: err instanceof Error ? err.message : String(err),
      });
    }
  }

  private finish(): void {
    this.update({
      phase: "done",
      trial: null,
      exportUrl: this.deps.client.exportUrl(this.view.sessionId, "csv"),
    });
  }

  /** Retry after an image/network failure; no response can have been sent. */
  async retry(): Promise<void> {
    if (this.view.phase !== "error") return;
    this.update({ phase: "loading", errorMessage: null });
    await this.loadPendingTrial();
  }

  /** Route one keyboard event; returns a promise when it triggered work. */
  handleKey(key: string): Promise<void> | null {
    switch (this.view.phase) {
      case "armed":
        if (TRIGGER_KEYS.has(key)) return this.present();
        return null;
      case "awaiting-response": {
        const options = this.view.trial?.response_options ?? [];
        const response = responseForKey(key, options);
        if (response !== null) return this.submit(response);
        return null;
      }
      default:
        return null; // early or repeated keys are ignored
    }
  }

  private async present(): Promise<void> {
    const { presenter, scheduler, mode } = this.deps;
    const trial = this.view.trial;
    if (!trial || !this.images) return;
    this.update({ phase: "presenting" });
    const img = composite(mode, this.images.left, this.images.right);
    const result = await presentForDuration(
      scheduler,
      trial.presentation_ms,
      () => presenter.show(img),
      () => presenter.blank(),
    );
    this.lastMeasuredMs = result.measuredMs;
    this.update({ phase: "awaiting-response" });
  }

  private async submit(response: string): Promise<void> {
    const trial = this.view.trial;
    if (!trial) return;
    this.update({ phase: "submitting" });
    this.audit.push({
      trialIndex: trial.trial_index,
      measuredMs: this.lastMeasuredMs ?? -1,
      response,
    });
    try {
      const out = await this.deps.client.submitResponse(
        this.view.sessionId, trial.trial_index, response,
      );
      this.update({ lastCorrect: out.correct, trialCount: out.trial_count });
      if (out.done) {
        this.finish();
      } else {
        this.update({ phase: "loading" });
        await this.loadPendingTrial();
      }
    } catch (err) {
      if (err instanceof SessionComplete) {
        this.finish();
      } else if (err instanceof SessionConflict) {
        // stale view (e.g. reopened tab): the server decides where we are
        this.update({ phase: "loading" });
        await this.loadPendingTrial();
      } else {
        this.update({
          phase: "error",
          errorMessage: err instanceof Error ? err.message : String(err),
        });
      }
    }
  }
}
