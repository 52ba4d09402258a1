"""Angular <-> pixel calibration shared by stimulus synthesis, foveation and the service.

A planar small-angle model: a single pixels-per-degree constant holds across
the display. All angular quantities elsewhere in the package are expressed in
degrees (eccentricity) or arcminutes (blur sigma, disparity); this module is
the only place where pixels enter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_PPD = 30.0  # config default, not a measured device value


@dataclass(frozen=True)
class DisplayModel:
    """Per-eye display geometry. ``ppd`` is pixels per degree at the center."""

    width_px: int = 2880
    height_px: int = 2720
    ppd: float = DEFAULT_PPD
    binocular_limit_deg: float = 25.0

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("display dimensions must be positive")
        if self.ppd <= 0:
            raise ValueError("ppd must be positive")
        if not 0 < self.binocular_limit_deg <= 90:
            raise ValueError("binocular_limit_deg must be in (0, 90]")

    def to_json_dict(self) -> dict:
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "ppd": self.ppd,
            "binocular_limit": self.binocular_limit_deg,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DisplayModel":
        return cls(
            width_px=int(d["width_px"]),
            height_px=int(d["height_px"]),
            ppd=float(d["ppd"]),
            binocular_limit_deg=float(d.get("binocular_limit", 25.0)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def eccentricity_of(display: DisplayModel, gaze_px, point_px) -> float:
    """Eccentricity in degrees of ``point_px`` relative to ``gaze_px``.

    Both arguments are (x, y) pixel positions; accepts arrays for the
    point, broadcasting elementwise.
    """
    gaze = np.asarray(gaze_px, dtype=float)
    p = np.asarray(point_px, dtype=float)
    dist = np.hypot(p[..., 0] - gaze[..., 0], p[..., 1] - gaze[..., 1])
    out = dist / display.ppd
    return float(out) if np.isscalar(out) or out.ndim == 0 else out


def eccentricity_map(display: DisplayModel, gaze_px, shape) -> np.ndarray:
    """Per-pixel eccentricity field in degrees for an image of ``shape`` (h, w)."""
    h, w = shape
    gx, gy = float(gaze_px[0]), float(gaze_px[1])
    ys, xs = np.mgrid[0:h, 0:w]
    return np.hypot(xs - gx, ys - gy) / display.ppd


def arcmin_to_px(display: DisplayModel, arcmin) -> float | np.ndarray:
    """Convert arcminutes of visual angle to pixels."""
    return np.multiply(arcmin, display.ppd / 60.0)


def px_to_arcmin(display: DisplayModel, px) -> float | np.ndarray:
    """Convert pixels to arcminutes of visual angle."""
    return np.multiply(px, 60.0 / display.ppd)
