/** Display-refresh-aligned presentation timing.
 *
 * The stimulus stays visible for the descriptor's presentation duration,
 * measured in requestAnimationFrame timestamps: blanking happens on the
 * first frame whose timestamp reaches start + duration, and the measured
 * duration (last visible frame boundary minus first) is reported for the
 * audit log. Tests drive this with a virtual frame clock.
 */

export interface FrameScheduler {
  requestFrame(cb: (timestampMs: number) => void): number;
  cancelFrame(handle: number): void;
}

export const browserScheduler: FrameScheduler = {
  requestFrame: (cb) => requestAnimationFrame(cb),
  cancelFrame: (h) => cancelAnimationFrame(h),
};

export interface PresentationResult {
  /** frame timestamp at which the stimulus became visible */
  startMs: number;
  /** frame timestamp at which it was blanked */
  endMs: number;
  measuredMs: number;
}

/**
 * Resolve after ~durationMs of visible frames; onBlank fires synchronously
 * on the blanking frame, before the promise resolves.
 */
export function presentForDuration(
  scheduler: FrameScheduler,
  durationMs: number,
  onShow: (t: number) => void,
  onBlank: (t: number) => void,
): Promise<PresentationResult> {
  return new Promise((resolve) => {
    scheduler.requestFrame((t0) => {
      onShow(t0);
      const tick = (t: number) => {
        if (t - t0 >= durationMs) {
          onBlank(t);
          resolve({ startMs: t0, endMs: t, measuredMs: t - t0 });
        } else {
          scheduler.requestFrame(tick);
        }
      };
      scheduler.requestFrame(tick);
    });
  });
}

/** Virtual scheduler for tests: fixed frame period, manual pumping. */
export class VirtualScheduler implements FrameScheduler {
  private queue = new Map<number, (t: number) => void>();
  private nextHandle = 1;
  now = 0;

  constructor(readonly framePeriodMs = 1000 / 60) {}

  requestFrame(cb: (t: number) => void): number {
    const h = this.nextHandle++;
    this.queue.set(h, cb);
    return h;
  }

  cancelFrame(handle: number): void {
    this.queue.delete(handle);
  }

  /** Advance one frame: bump the clock, flush callbacks queued before it. */
  pumpFrame(): void {
    this.now += this.framePeriodMs;
    const due = [...this.queue.entries()];
    this.queue.clear();
    for (const [, cb] of due) cb(this.now);
  }

  async pumpUntilIdle(maxFrames = 10000): Promise<void> {
    for (let i = 0; i < maxFrames && this.queue.size > 0; i++) {
      this.pumpFrame();
      // let promise continuations scheduled by the frame run
      await Promise.resolve();
      await Promise.resolve();
    }
  }
}
