"""Independent measurement oracles used by the test suite.

These deliberately avoid the library's own sampling/filter code paths:
disparity is measured by sum-of-squared-difference matching over windows, and
spectral attenuation by FFT ratios on images with constant borders (which
make mirror-padded convolution exactly circular).
"""

from __future__ import annotations

import numpy as np


def shift_ssd(left_rows: np.ndarray, right_rows: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """SSD between right and left resampled at x + s, per candidate shift.

    Rows are (n, width) matched slices. Linear interpolation of the left
    row at fractional positions; border columns excluded from the sum.
    """
    n, w = left_rows.shape
    margin = int(np.ceil(np.abs(shifts).max())) + 2
    xs = np.arange(margin, w - margin, dtype=float)
    out = np.empty(len(shifts))
    for i, s in enumerate(shifts):
        pos = xs + s
        lo = np.floor(pos).astype(int)
        frac = pos - lo
        sampled = (1 - frac) * left_rows[:, lo] + frac * left_rows[:, lo + 1]
        diff = sampled - right_rows[:, margin:w - margin]
        out[i] = np.mean(diff * diff)
    return out


def measure_disparity_px(
    left: np.ndarray,
    right: np.ndarray,
    window_mask: np.ndarray,
    max_shift_px: float,
    step: float = 0.02,
) -> float:
    """Disparity (pixels) between right and left inside masked rows, by
    fine-grid SSD matching."""
    rows = np.where(window_mask.any(axis=1))[0]
    if rows.size == 0:
        raise ValueError("empty window mask")
    # use only columns that are masked in a band around each row
    shifts = np.arange(-max_shift_px, max_shift_px + step, step)
    total = np.zeros(len(shifts))
    count = 0
    for y in rows:
        cols = np.where(window_mask[y])[0]
        if cols.size < 8:
            continue
        x0, x1 = cols.min(), cols.max()
        pad = int(np.ceil(max_shift_px)) + 2
        a = max(0, x0 - pad)
        b = min(left.shape[1], x1 + pad + 1)
        lrow = left[y, a:b][None, :]
        rrow = right[y, a:b][None, :]
        total += shift_ssd(lrow, rrow, shifts)
        count += 1
    if count == 0:
        raise ValueError("no usable rows in mask")
    return float(shifts[np.argmin(total)])
