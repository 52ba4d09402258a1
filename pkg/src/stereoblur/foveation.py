"""Gaze-contingent foveation by blending a pre-blurred image pyramid.

Each output pixel looks up its eccentricity, asks the blur budget for a
target sigma, and linearly blends the two pyramid levels bracketing that
sigma. The result is then linearly remapped so its value range matches the
input's (computed over non-black pixels, so a blacked-out center does not pin
the minimum).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .display import DisplayModel, eccentricity_map
from .stimulus import contrast_stretch, gaussian_blur

DEFAULT_PYRAMID_SIGMAS = (0.0, 2.0, 4.0, 8.0, 16.0, 32.0)  # arcmin


@dataclass(frozen=True)
class BlurPyramid:
    sigmas: tuple[float, ...]
    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.sigmas) != len(self.levels):
            raise ValueError("sigmas and levels must align")
        if self.sigmas[0] != 0.0:
            raise ValueError("pyramid must start at sigma = 0")
        if np.any(np.diff(self.sigmas) <= 0):
            raise ValueError("sigmas must be strictly increasing")
        shapes = {lvl.shape for lvl in self.levels}
        if len(shapes) != 1:
            raise ValueError("all levels must share dimensions")


def build_pyramid(
    img: np.ndarray,
    sigmas=DEFAULT_PYRAMID_SIGMAS,
    display: DisplayModel | None = None,
) -> BlurPyramid:
    """Pre-blur the image at each sigma; level 0 is the unmodified input.

    No per-level contrast stretch: the range remap happens once, globally,
    after blending.
    """
    display = display or DisplayModel()
    sigmas = tuple(float(s) for s in sigmas)
    if sigmas[0] != 0.0 or np.any(np.diff(sigmas) <= 0):
        raise ValueError("sigmas must be ascending and start at 0")
    levels = tuple(gaussian_blur(img, s, display) for s in sigmas)
    return BlurPyramid(sigmas=sigmas, levels=levels)


def foveate(
    pyramid: BlurPyramid,
    gaze_px,
    budget,
    display: DisplayModel,
) -> np.ndarray:
    """Blend pyramid levels per pixel according to budget(eccentricity_deg).

    ``budget`` is any callable mapping an eccentricity array (degrees) to
    target sigmas (arcmin); targets above the top level clamp to it. The
    output's min/max are remapped to the input's, measured over non-black
    input pixels.
    """
    h, w = pyramid.levels[0].shape
    gx, gy = float(gaze_px[0]), float(gaze_px[1])
    if not (0 <= gx < w and 0 <= gy < h):
        raise ValueError("gaze point outside image bounds")
    ecc = eccentricity_map(display, (gx, gy), (h, w))
    target = np.asarray(budget(ecc), dtype=float)
    sig = np.asarray(pyramid.sigmas)
    target = np.clip(target, sig[0], sig[-1])

    hi_idx = np.clip(np.searchsorted(sig, target, side="left"), 1, len(sig) - 1)
    lo_idx = hi_idx - 1
    lo_s, hi_s = sig[lo_idx], sig[hi_idx]
    frac = (target - lo_s) / (hi_s - lo_s)

    stack = np.stack(pyramid.levels)
    rows, cols = np.mgrid[0:h, 0:w]
    out = (1.0 - frac) * stack[lo_idx, rows, cols] + frac * stack[hi_idx, rows, cols]

    src = pyramid.levels[0]
    visible = src > 0
    if not visible.any():
        return out
    return contrast_stretch(out, src, mask=visible)


def budget_from_model(model, clamp: bool = True):
    """Budget callable from a surface model's optimal-blur curve."""
    from .model import optimal_blur

    lo, hi = model.theta_range

    def budget(ecc_deg):
        ecc = np.clip(ecc_deg, lo, hi) if clamp else ecc_deg
        return optimal_blur(model, ecc, extrapolate=not clamp)

    return budget


def budget_from_table(thetas, sigmas):
    """Piecewise-linear budget through (theta_deg, sigma_arcmin) knots."""
    thetas = np.asarray(thetas, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if np.any(np.diff(thetas) <= 0):
        raise ValueError("table thetas must be strictly increasing")

    def budget(ecc_deg):
        return np.interp(ecc_deg, thetas, sigmas)

    return budget
