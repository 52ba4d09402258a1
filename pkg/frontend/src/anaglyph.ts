/** Pixel compositing for the viewing modes.
 *
 * Stimuli arrive as grayscale PNGs; compositing works on RGBA buffers so it
 * is testable without a real canvas. Red-cyan anaglyph puts the left eye in
 * the red channel and the right eye in green+blue: identical eyes yield a
 * neutral gray composite.
 */

export interface GrayImage {
  width: number;
  height: number;
  /** one luminance byte per pixel, row-major */
  data: Uint8ClampedArray;
}

export type ViewMode = "anaglyph" | "side-by-side" | "stereoscope";

function assertSameSize(left: GrayImage, right: GrayImage): void {
  if (left.width !== right.width || left.height !== right.height) {
    throw new Error("left/right images must share dimensions");
  }
}

export function anaglyphComposite(left: GrayImage, right: GrayImage): ImageDataLike {
  assertSameSize(left, right);
  const n = left.width * left.height;
  const out = new Uint8ClampedArray(n * 4);
  for (let i = 0; i < n; i++) {
    out[i * 4] = left.data[i];
    out[i * 4 + 1] = right.data[i];
    out[i * 4 + 2] = right.data[i];
    out[i * 4 + 3] = 255;
  }
  return { width: left.width, height: left.height, data: out };
}

export function sideBySideComposite(left: GrayImage, right: GrayImage, gapPx = 0): ImageDataLike {
  assertSameSize(left, right);
  const w = left.width * 2 + gapPx;
  const h = left.height;
  const out = new Uint8ClampedArray(w * h * 4);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < left.width; x++) {
      const l = left.data[y * left.width + x];
      const r = right.data[y * right.width + x];
      let o = (y * w + x) * 4;
      out[o] = out[o + 1] = out[o + 2] = l;
      out[o + 3] = 255;
      o = (y * w + left.width + gapPx + x) * 4;
      out[o] = out[o + 1] = out[o + 2] = r;
      out[o + 3] = 255;
    }
  }
  return { width: w, height: h, data: out };
}

/** Minimal structural ImageData so tests run without a DOM canvas. */
export interface ImageDataLike {
  width: number;
  height: number;
  data: Uint8ClampedArray;
}

export function composite(mode: ViewMode, left: GrayImage, right: GrayImage): ImageDataLike {
  switch (mode) {
    case "anaglyph":
      return anaglyphComposite(left, right);
    case "side-by-side":
      return sideBySideComposite(left, right, 8);
    case "stereoscope":
      // mirror stereoscope: right eye's image is mirrored horizontally
      return sideBySideComposite(left, mirrorHorizontal(right), 32);
  }
}

export function mirrorHorizontal(img: GrayImage): GrayImage {
  const out = new Uint8ClampedArray(img.data.length);
  for (let y = 0; y < img.height; y++) {
    for (let x = 0; x < img.width; x++) {
      out[y * img.width + x] = img.data[y * img.width + (img.width - 1 - x)];
    }
  }
  return { width: img.width, height: img.height, data: out };
}
