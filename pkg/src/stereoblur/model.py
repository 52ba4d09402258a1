"""Closed-form stereoacuity surface: threshold as a function of eccentricity and blur.

The surface is a parabola in blur sigma whose three parameters each follow an
exponential curve in eccentricity:

    M(theta, sigma) = p1(theta) * (sigma - p2(theta))**2 + p3(theta)
    p_i(theta)      = a * exp(b * theta) + c

Units are fixed package-wide: eccentricity theta in degrees, blur sigma and
thresholds in arcminutes. The published coefficients are only trusted for
theta in [0, 20] deg and sigma in [0, 15] arcmin; evaluation outside that box
raises unless extrapolation is explicitly requested. p1 grows steeply past
20 deg, so a constant-p1 mode is provided for extrapolated use.

Note on the two "optimal blur" flavors: the coefficient-derived values
p2(10) = 5.70' and p2(20) = 12.20' differ by ~5-8% from the rounded prose
values 5.41'/11.33' sometimes quoted alongside the model; this module exposes
only the coefficient-derived numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .display import DisplayModel, eccentricity_map

THETA_RANGE = (0.0, 20.0)
SIGMA_RANGE = (0.0, 15.0)
P1_CONSTANT_DEFAULT = 0.0034  # published constant-p1 replacement, kept verbatim


@dataclass(frozen=True)
class ExpCurve:
    """Exponential parameter curve a * exp(b * theta) + c."""

    a: float
    b: float
    c: float

    def __call__(self, theta):
        return self.a * np.exp(self.b * np.asarray(theta, dtype=float)) + self.c

    def to_json_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExpCurve":
        return cls(a=float(d["a"]), b=float(d["b"]), c=float(d["c"]))


@dataclass(frozen=True)
class SurfaceModel:
    """The fitted perceptual surface: three exponential parameter curves."""

    p1: ExpCurve
    p2: ExpCurve
    p3: ExpCurve
    p1_constant: float = P1_CONSTANT_DEFAULT
    theta_range: tuple[float, float] = THETA_RANGE
    sigma_range: tuple[float, float] = SIGMA_RANGE

    def to_json_dict(self) -> dict:
        return {
            "p1": self.p1.to_json_dict(),
            "p2": self.p2.to_json_dict(),
            "p3": self.p3.to_json_dict(),
            "p1_constant": self.p1_constant,
            "theta_range": list(self.theta_range),
            "sigma_range": list(self.sigma_range),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SurfaceModel":
        return cls(
            p1=ExpCurve.from_json_dict(d["p1"]),
            p2=ExpCurve.from_json_dict(d["p2"]),
            p3=ExpCurve.from_json_dict(d["p3"]),
            p1_constant=float(d.get("p1_constant", P1_CONSTANT_DEFAULT)),
            theta_range=tuple(d.get("theta_range", THETA_RANGE)),
            sigma_range=tuple(d.get("sigma_range", SIGMA_RANGE)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def loads(cls, s: str) -> "SurfaceModel":
        return cls.from_json_dict(json.loads(s))

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "SurfaceModel":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def default_paper_model() -> SurfaceModel:
    """The published surface coefficients, exactly as printed."""
    return SurfaceModel(
        p1=ExpCurve(2.07e-11, 0.87, 0.003),
        p2=ExpCurve(8.85, 0.04, -7.5),
        p3=ExpCurve(0.04, 0.15, 0.12),
    )


def _check_range(name: str, value, lo: float, hi: float, extrapolate: bool):
    v = np.asarray(value, dtype=float)
    if np.any(v < 0):
        raise ValueError(f"{name} must be non-negative")
    if not extrapolate and (np.any(v < lo) or np.any(v > hi)):
        raise ValueError(
            f"{name}={value} outside fitted range [{lo}, {hi}]; "
            "pass extrapolate=True to evaluate anyway"
        )


def eval_threshold(
    model: SurfaceModel,
    theta,
    sigma,
    mode: str = "printed-p1",
    extrapolate: bool = False,
):
    """Stereoacuity threshold in arcminutes at (theta deg, sigma arcmin).

    mode="printed-p1" evaluates the fitted p1 curve; mode="constant-p1"
    replaces p1(theta) with the model's constant fallback (recommended when
    extrapolating beyond 20 deg).
    """
    _check_range("theta", theta, *model.theta_range, extrapolate=extrapolate)
    _check_range("sigma", sigma, *model.sigma_range, extrapolate=extrapolate)
    theta = np.asarray(theta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mode == "printed-p1":
        p1 = model.p1(theta)
    elif mode == "constant-p1":
        p1 = model.p1_constant
    else:
        raise ValueError(f"unknown mode {mode!r}")
    out = p1 * (sigma - model.p2(theta)) ** 2 + model.p3(theta)
    return float(out) if out.ndim == 0 else out


def optimal_blur(model: SurfaceModel, theta, extrapolate: bool = False):
    """Blur sigma (arcmin) minimizing the threshold at fixed eccentricity.

    The surface is an upward parabola in sigma, so the minimizer is its
    vertex p2(theta), floored at zero blur.
    """
    _check_range("theta", theta, *model.theta_range, extrapolate=extrapolate)
    out = np.maximum(0.0, model.p2(np.asarray(theta, dtype=float)))
    return float(out) if out.ndim == 0 else out


def sigma_from_cutoff(cutoff_cpd) -> float | np.ndarray:
    """Gaussian sigma in arcminutes equivalent to a cut-off frequency in cpd.

    Uses sigma_deg = 3 / (2 pi f), so sigma_arcmin * f == 90/pi for all f.
    """
    f = np.asarray(cutoff_cpd, dtype=float)
    if np.any(f <= 0):
        raise ValueError("cut-off frequency must be positive")
    out = 60.0 * 3.0 / (2.0 * math.pi * f)
    return float(out) if out.ndim == 0 else out


def blur_budget_map(model: SurfaceModel, display: DisplayModel, gaze_px) -> np.ndarray:
    """Per-pixel blur budget (sigma, arcmin) for a gaze point on the display.

    Eccentricity beyond the fitted range is clamped, so far periphery gets
    the 20-degree budget rather than an extrapolated one.
    """
    gx, gy = float(gaze_px[0]), float(gaze_px[1])
    if not (0 <= gx < display.width_px and 0 <= gy < display.height_px):
        raise ValueError("gaze point outside image bounds")
    ecc = eccentricity_map(display, (gx, gy), (display.height_px, display.width_px))
    ecc = np.clip(ecc, model.theta_range[0], model.theta_range[1])
    return optimal_blur(model, ecc)


def save_budget_map(budget_arcmin: np.ndarray, image_path, sidecar_path=None) -> None:
    """Write a budget map as a 16-bit grayscale PNG (arcmin * 100) + JSON sidecar."""
    from PIL import Image

    scale = 0.01  # arcmin per stored unit
    q = np.round(budget_arcmin / scale)
    if np.any(q < 0) or np.any(q > 65535):
        raise ValueError("budget values out of range for 16-bit encoding")
    img = Image.fromarray(q.astype("<u2"))  # uint16 -> 16-bit grayscale
    img.save(image_path)
    if sidecar_path is None:
        sidecar_path = str(image_path) + ".json"
    sidecar = {
        "value_scale": scale,
        "units": "arcmin",
        "dtype": "uint16",
        "byte_order": "little",
        "width": int(budget_arcmin.shape[1]),
        "height": int(budget_arcmin.shape[0]),
    }
    with open(sidecar_path, "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")


def load_budget_map(image_path, sidecar_path=None) -> np.ndarray:
    """Read back a budget map written by :func:`save_budget_map`."""
    from PIL import Image

    if sidecar_path is None:
        sidecar_path = str(image_path) + ".json"
    with open(sidecar_path) as f:
        sidecar = json.load(f)
    arr = np.asarray(Image.open(image_path), dtype=np.float64)
    return arr * float(sidecar["value_scale"])
