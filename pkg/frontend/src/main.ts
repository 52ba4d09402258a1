/** DOM entry point: wires the session runner to a canvas and the keyboard.
 *
 * Configuration is limited to the service base URL (?service=...) plus an
 * optional session id to resume (?session=...) and a viewing mode
 * (?mode=anaglyph|side-by-side|stereoscope). A new ring session can be
 * started from the condition picker.
 */

import { Condition, ServiceClient } from "./api";
import { GrayImage, ImageDataLike, ViewMode } from "./anaglyph";
import { browserScheduler } from "./timing";
import { ClientSessionView, SessionRunner } from "./session";

const params = new URLSearchParams(location.search);
const client = new ServiceClient(params.get("service") ?? "");
const mode = (params.get("mode") ?? "anaglyph") as ViewMode;

const canvas = document.getElementById("stimulus") as HTMLCanvasElement;
const statusEl = document.getElementById("status") as HTMLElement;
const exportEl = document.getElementById("export") as HTMLAnchorElement;
const retryEl = document.getElementById("retry") as HTMLButtonElement;

async function loadImage(path: string): Promise<GrayImage> {
  const blob = await client.fetchImage(path);
  const bitmap = await createImageBitmap(blob);
  const off = document.createElement("canvas");
  off.width = bitmap.width;
  off.height = bitmap.height;
  const ctx = off.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const rgba = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  const gray = new Uint8ClampedArray(bitmap.width * bitmap.height);
  for (let i = 0; i < gray.length; i++) gray[i] = rgba[i * 4]; // grayscale PNG: r=g=b
  return { width: bitmap.width, height: bitmap.height, data: gray };
}

const presenter = {
  show(img: ImageDataLike): void {
    canvas.width = img.width;
    canvas.height = img.height;
    const ctx = canvas.getContext("2d")!;
    const pixels = new Uint8ClampedArray(img.data);  // plain-ArrayBuffer copy
    ctx.putImageData(new ImageData(pixels, img.width, img.height), 0, 0);
    canvas.style.visibility = "visible";
  },
  blank(): void {
    canvas.style.visibility = "hidden";
  },
};

function describe(view: ClientSessionView): string {
  switch (view.phase) {
    case "idle":
      return "pick a condition to begin";
    case "loading":
      return "loading trial...";
    case "armed":
      return `trial ${view.trialCount + 1} of ${view.maxTrials}: press Space to present`;
    case "presenting":
      return "look at the ring";
    case "awaiting-response":
      return view.trial?.response_options.join(" / ") + "? (use the arrow keys)";
    case "submitting":
      return "...";
    case "done":
      return "session complete";
    case "error":
      return `problem: ${view.errorMessage} (press Retry)`;
  }
}

const runner = new SessionRunner({
  client,
  loadImage,
  scheduler: browserScheduler,
  presenter,
  mode,
  onUpdate(view) {
    statusEl.textContent = describe(view);
    exportEl.style.display = view.phase === "done" ? "inline" : "none";
    if (view.exportUrl) exportEl.href = view.exportUrl;
    retryEl.style.display = view.phase === "error" ? "inline" : "none";
  },
});

window.addEventListener("keydown", (ev) => {
  if (ev.repeat) return;
  runner.handleKey(ev.key);
});
retryEl.addEventListener("click", () => void runner.retry());

async function boot(): Promise<void> {
  const resume = params.get("session");
  if (resume) {
    await runner.start(resume);
    history.replaceState(null, "", `?service=${params.get("service") ?? ""}&session=${resume}&mode=${mode}`);
    return;
  }
  const picker = document.getElementById("picker") as HTMLElement;
  picker.style.display = "block";
  (document.getElementById("begin") as HTMLButtonElement).addEventListener("click", async () => {
    const theta = parseFloat((document.getElementById("theta") as HTMLSelectElement).value);
    const sigma = parseFloat((document.getElementById("sigma") as HTMLInputElement).value);
    const participant = (document.getElementById("participant") as HTMLInputElement).value;
    const condition: Condition = { theta, sigma };
    const created = await client.createSession(condition, { participant });
    picker.style.display = "none";
    history.replaceState(null, "", `?service=${params.get("service") ?? ""}&session=${created.id}&mode=${mode}`);
    await runner.start(created.id);
  });
}

void boot();
