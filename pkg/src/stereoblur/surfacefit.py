"""Assemble the stereoacuity surface from threshold estimates.

Per eccentricity: a weighted quadratic fit of threshold against blur sigma
(weights 1/u^2, outliers excluded), converted to vertex form
p1*(sigma - p2)^2 + p3. Across eccentricities: an exponential curve
a*exp(b*theta) + c through each of p1, p2, p3. With measurements at exactly
three equally spaced eccentricities the exponential has a closed-form
solution, which is the canonical path; extra points fall back to least
squares seeded by that closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import ExpCurve, SurfaceModel, SIGMA_RANGE, THETA_RANGE
from .psychofit import ThresholdEstimate


class SurfaceFitError(RuntimeError):
    pass


class FitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ParabolaParams:
    """Vertex form of one eccentricity's threshold-vs-blur parabola."""

    p1: float  # curvature, arcmin^-1
    p2: float  # vertex sigma, arcmin
    p3: float  # vertex threshold, arcmin
    theta: float
    convex: bool = True


def fit_parabola(estimates: list[ThresholdEstimate]) -> ParabolaParams:
    """Weighted least squares of T on (sigma^2, sigma, 1) at one eccentricity.

    Outlier estimates are dropped first; at least three usable points with
    distinct sigma are required. A non-convex result (curvature <= 0, possible
    with noisy data) is returned with ``convex=False`` rather than rejected.
    """
    usable = [e for e in estimates if not e.outlier]
    if not usable:
        raise SurfaceFitError("no non-outlier estimates")
    thetas = {e.theta for e in usable}
    if len(thetas) != 1:
        raise SurfaceFitError(f"estimates span multiple eccentricities: {thetas}")
    theta = usable[0].theta
    sig = np.array([e.sigma for e in usable], dtype=float)
    T = np.array([e.T for e in usable], dtype=float)
    w = np.array([min(e.weight, 1e15) for e in usable], dtype=float)
    if np.unique(sig).size < 3:
        raise SurfaceFitError("need at least 3 distinct blur levels after outlier removal")
    # polyfit scales columns internally, which keeps the curvature coefficient
    # accurate enough for exact round trips
    a, b, c = np.polyfit(sig, T, 2, w=np.sqrt(w))
    convex = a > 0
    if not convex:
        warnings.warn(
            f"non-convex parabola at theta={theta} (curvature {a:.3g})", FitWarning
        )
        vertex_sigma = -b / (2 * a) if a != 0 else 0.0
        vertex_T = c - b**2 / (4 * a) if a != 0 else c
    else:
        vertex_sigma = -b / (2 * a)
        vertex_T = c - b**2 / (4 * a)
    return ParabolaParams(
        p1=float(a), p2=float(vertex_sigma), p3=float(vertex_T),
        theta=float(theta), convex=bool(convex),
    )


def fit_exponential(points, exact_3pt: bool = True) -> ExpCurve:
    """Fit a*exp(b*theta) + c through (theta, value) points.

    With exactly three equally spaced thetas the solve is closed-form:
    r = (y2-y1)/(y1-y0), b = ln(r)/step, a = (y1-y0)/(r-1), c = y0-a.
    Degenerate geometry (equal or non-monotone values) falls back to a
    constant fit at the mean, with a warning.
    """
    pts = sorted((float(t), float(y)) for t, y in points)
    if len(pts) < 3:
        raise SurfaceFitError("need at least 3 points for an exponential fit")
    th = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])

    def _closed_form(t0, t1, t2, y0, y1, y2) -> ExpCurve:
        step = t1 - t0
        if abs((t2 - t1) - step) > 1e-9 * max(abs(step), 1.0):
            raise SurfaceFitError("closed-form solve needs equally spaced thetas")
        d0, d1 = y1 - y0, y2 - y1
        if d0 == 0 or (d1 / d0) <= 0:
            warnings.warn(
                "degenerate exponential geometry; using constant fallback", FitWarning
            )
            return ExpCurve(a=0.0, b=0.0, c=float(np.mean([y0, y1, y2])))
        r = d1 / d0
        if r == 1.0:  # exactly linear: represent with a vanishing growth rate
            b = 1e-9
            a = d0 / step / b
            return ExpCurve(a=a, b=b, c=y0 - a)
        b = float(np.log(r) / step)
        a = float(d0 / (r - 1.0))
        return ExpCurve(a=a, b=b, c=float(y0 - a))

    if exact_3pt:
        if len(pts) != 3:
            raise SurfaceFitError("exact_3pt requires exactly 3 points")
        return _closed_form(th[0], th[1], th[2], y[0], y[1], y[2])

    mid = len(pts) // 2
    spacing_ok = abs((th[-1] - th[mid]) - (th[mid] - th[0])) < 1e-9 * max(th[-1] - th[0], 1.0)
    if spacing_ok:
        init = _closed_form(th[0], th[mid], th[-1], y[0], y[mid], y[-1])
    else:
        # crude initializer: offset just past the range, growth from the ends
        d0, d1 = y[mid] - y[0], y[-1] - y[mid]
        if d0 == 0 or d1 / d0 <= 0:
            warnings.warn(
                "degenerate exponential geometry; using constant fallback", FitWarning
            )
            init = ExpCurve(a=0.0, b=0.0, c=float(np.mean(y)))
        else:
            span = y[-1] - y[0]
            c0 = y[0] - 0.05 * abs(span) - 1e-9
            b0 = float(np.log((y[-1] - c0) / (y[0] - c0)) / (th[-1] - th[0]))
            a0 = float((y[0] - c0) / np.exp(b0 * th[0]))
            init = ExpCurve(a=a0, b=b0, c=float(c0))
    if init.a == 0.0 and init.b == 0.0:
        return ExpCurve(a=0.0, b=0.0, c=float(np.mean(y)))
    from scipy.optimize import least_squares

    def resid(p):
        return p[0] * np.exp(p[1] * th) + p[2] - y

    sol = least_squares(resid, x0=[init.a, init.b, init.c], method="lm")
    return ExpCurve(a=float(sol.x[0]), b=float(sol.x[1]), c=float(sol.x[2]))


def assemble_surface(parabolas, p1_mode: str = "fit") -> SurfaceModel:
    """Exponential fits of p1, p2, p3 across eccentricity; returns the surface.

    p1_mode="constant" replaces the p1 curve by the mean of the per-theta
    curvatures (the recommended form when extrapolating past the fitted
    eccentricity range).
    """
    if p1_mode not in ("fit", "constant"):
        raise ValueError(f"unknown p1_mode {p1_mode!r}")
    ps = sorted(parabolas, key=lambda p: p.theta)
    thetas = [p.theta for p in ps]
    if len(set(thetas)) != len(thetas):
        raise SurfaceFitError("parabolas must be at distinct eccentricities")
    exact = len(ps) == 3
    p1_values = [p.p1 for p in ps]
    p1_constant = float(np.mean(p1_values))
    if p1_mode == "constant":
        p1_curve = ExpCurve(a=0.0, b=0.0, c=p1_constant)
    else:
        p1_curve = fit_exponential(zip(thetas, p1_values), exact_3pt=exact)
    p2_curve = fit_exponential(zip(thetas, [p.p2 for p in ps]), exact_3pt=exact)
    p3_curve = fit_exponential(zip(thetas, [p.p3 for p in ps]), exact_3pt=exact)
    return SurfaceModel(
        p1=p1_curve,
        p2=p2_curve,
        p3=p3_curve,
        p1_constant=p1_constant,
        theta_range=(min(min(thetas), THETA_RANGE[0]), max(max(thetas), THETA_RANGE[1])),
        sigma_range=SIGMA_RANGE,
    )


def fit_report(parabolas, estimates, model: SurfaceModel) -> str:
    """Human-readable summary of a surface fit: parabolas, outliers, residuals."""
    lines = ["surface fit report", "==================="]
    for p in sorted(parabolas, key=lambda q: q.theta):
        tag = "" if p.convex else "  [non-convex]"
        lines.append(
            f"theta={p.theta:>5.1f} deg: p1={p.p1:.6g}  p2={p.p2:.4f}'  p3={p.p3:.4f}'{tag}"
        )
    n_out = sum(1 for e in estimates if e.outlier)
    lines.append(f"estimates: {len(estimates)} total, {n_out} outliers excluded (u > 0.3)")
    resid = []
    from .model import eval_threshold

    for e in estimates:
        if e.outlier or e.theta is None or e.sigma is None:
            continue
        pred = eval_threshold(model, e.theta, e.sigma, extrapolate=True)
        resid.append((e.T - pred) ** 2 * min(e.weight, 1e15))
    if resid:
        lines.append(f"weighted residual (sum of squares): {float(np.sum(resid)):.6g}")
    lines.append("model coefficients:")
    for name in ("p1", "p2", "p3"):
        c = getattr(model, name)
        lines.append(f"  {name}(theta) = {c.a:.6g} * exp({c.b:.6g} * theta) + {c.c:.6g}")
    lines.append(f"  p1_constant = {model.p1_constant:.6g}")
    return "\n".join(lines) + "\n"
