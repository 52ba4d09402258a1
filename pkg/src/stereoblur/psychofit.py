"""Threshold extraction from 2AFC trial data.

Pipeline: tally trials into per-intensity detection probabilities, fit the
chance-floored Weibull

    F(x) = 1 - 0.5 * exp(-(x / lam)**k),   F(0) = 0.5,  F -> 1

by weighted least squares (weights = trial counts), read the 75%-correct
threshold off the fit in closed form, and bootstrap the data 100 times for an
uncertainty. Estimates with relative uncertainty u = T_sigma / T above 0.3
are flagged as outliers and carry weight 1/u^2 for downstream surface fits.

The fit is a damped Gauss-Newton (Levenberg-Marquardt) in (log lam, log k),
multi-started on a 5x5 grid of initial guesses. The solver is batched over
problems so bootstrap replicates and Monte-Carlo sweeps refit in one pass.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)
OUTLIER_U = 0.3
GRAD_TOL = 1e-8
MAX_ITER = 200


class FitError(RuntimeError):
    """Raised when the psychometric fit cannot be performed or fails to converge."""


class UnstableEstimateError(FitError):
    """Raised when more than half of the bootstrap refits fail."""


@dataclass(frozen=True)
class PsychometricDataset:
    """Per-intensity tallies: disparity (arcmin), trials shown, trials correct."""

    disparity: np.ndarray
    n_trials: np.ndarray
    n_correct: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.disparity, dtype=float)
        n = np.asarray(self.n_trials, dtype=int)
        c = np.asarray(self.n_correct, dtype=int)
        if d.size == 0:
            raise ValueError("empty dataset")
        if np.any(np.diff(d) <= 0):
            raise ValueError("disparities must be strictly ascending")
        if np.any(n < 1) or np.any(c < 0) or np.any(c > n):
            raise ValueError("require 0 <= n_correct <= n_trials and n_trials >= 1")
        object.__setattr__(self, "disparity", d)
        object.__setattr__(self, "n_trials", n)
        object.__setattr__(self, "n_correct", c)

    def p_correct(self) -> np.ndarray:
        return self.n_correct / self.n_trials


@dataclass(frozen=True)
class WeibullParams:
    lam: float
    k: float

    def __post_init__(self):
        if not (self.lam > 0 and self.k > 0):
            raise ValueError("lam and k must be positive")


@dataclass(frozen=True)
class ThresholdEstimate:
    """75%-threshold with bootstrap uncertainty and surface-fit weight."""

    T: float
    T_sigma: float
    u: float
    weight: float
    outlier: bool
    theta: float | None = None
    sigma: float | None = None


def tally(trials) -> PsychometricDataset:
    """Group trial records by presented disparity, ascending."""
    if not trials:
        raise ValueError("no trials to tally")
    counts: dict[float, list[int]] = {}
    for t in trials:
        row = counts.setdefault(float(t.disparity), [0, 0])
        row[0] += 1
        row[1] += int(bool(t.correct))
    d = np.array(sorted(counts))
    n = np.array([counts[x][0] for x in d])
    c = np.array([counts[x][1] for x in d])
    return PsychometricDataset(d, n, c)


def weibull_eval(params: WeibullParams, x):
    """Chance-floored Weibull detection probability, in [0.5, 1)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    out = 1.0 - 0.5 * np.exp(-((x / params.lam) ** params.k))
    return float(out) if out.ndim == 0 else out


def threshold_from_fit(params: WeibullParams) -> float:
    """Closed-form 75% point of the chance-floored Weibull: lam * ln(2)^(1/k)."""
    return params.lam * LN2 ** (1.0 / params.k)


def _weibull_batch(logparams, logx):
    """F and its Jacobian wrt (log lam, log k), batched.

    logparams: (..., 2); logx: (n,) with -inf allowed for x == 0.
    Returns F (..., n) and J (..., n, 2).
    """
    u = logparams[..., 0:1]
    v = logparams[..., 1:2]
    k = np.exp(v)
    # t = (x/lam)^k computed in log space; clamp the exponent so exp stays finite
    log_t = np.where(np.isfinite(logx), k * (logx - u), -np.inf)
    t = np.exp(np.minimum(log_t, 700.0))
    e = 0.5 * np.exp(-t)
    F = 1.0 - e
    dF_du = -e * k * t
    dF_dv = np.where(np.isfinite(logx), e * k * (logx - u) * t, 0.0)
    return F, np.stack([dF_du, dF_dv], axis=-1)


def _lm_iterate(theta, sse, logx, Pb, sw, gtol, max_iter):
    """Core damped Gauss-Newton loop over a flat batch of problems.

    Mutates theta/sse in place; returns the converged mask. Convergence is a
    gradient norm below gtol or, failing that, Levenberg stagnation (no
    acceptable step left) with the gradient at the float64 rounding floor of
    the objective; for noisy weighted data the floor, about eps * SSE scale,
    sits above an absolute 1e-8. Because the Jacobian scales with k, flat
    small-k shelves can also trip the gradient test, so callers must still
    compare basins by SSE.
    """
    m = theta.shape[0]
    damping = np.full(m, 1e-3)
    active = np.ones(m, dtype=bool)
    converged = np.zeros(m, dtype=bool)

    def sse_of(th):
        F, _ = _weibull_batch(th, logx)
        r = sw * (Pb - F)
        return np.einsum("pn,pn->p", r, r)

    for _ in range(max_iter):
        if not active.any():
            break
        F, J = _weibull_batch(theta, logx)
        r = sw * (Pb - F)
        Jw = -sw[..., None] * J  # d residual / d params
        g = 2.0 * np.einsum("pnj,pn->pj", Jw, r)
        gnorm = np.linalg.norm(g, axis=-1)
        stag_tol = np.maximum(gtol, 4e-7 * (1.0 + sse))
        newly = active & ((gnorm < gtol) | ((damping >= 1e10) & (gnorm < stag_tol)))
        converged |= newly
        active &= ~newly
        if not active.any():
            break
        A = np.einsum("pni,pnj->pij", Jw, Jw)
        diag = np.maximum(np.einsum("pii->pi", A), 1e-12)
        Ad = A + damping[:, None, None] * np.einsum("pi,ij->pij", diag, np.eye(2))
        rhs = -np.einsum("pnj,pn->pj", Jw, r)
        det = Ad[:, 0, 0] * Ad[:, 1, 1] - Ad[:, 0, 1] * Ad[:, 1, 0]
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        step = np.empty_like(rhs)
        step[:, 0] = (Ad[:, 1, 1] * rhs[:, 0] - Ad[:, 0, 1] * rhs[:, 1]) / det
        step[:, 1] = (-Ad[:, 1, 0] * rhs[:, 0] + Ad[:, 0, 0] * rhs[:, 1]) / det
        trial = theta + np.where(active[:, None], step, 0.0)
        np.clip(trial, -80.0, 80.0, out=trial)
        trial_sse = sse_of(trial)
        # strict improvement only: equal-SSE drift would mask stagnation
        better = active & (trial_sse < sse)
        theta[better] = trial[better]
        sse[better] = trial_sse[better]
        damping[better] = np.maximum(damping[better] / 3.0, 1e-12)
        worse = active & ~better
        damping[worse] = np.minimum(damping[worse] * 7.0, 1e12)
    return converged


def _lm_weibull(x, P, w, starts, gtol=GRAD_TOL, max_iter=MAX_ITER):
    """Levenberg-damped Gauss-Newton on batched weighted Weibull problems.

    x: (n,) intensities; P: (B, n) probabilities; w: (n,) or (B, n) weights;
    starts: (B, S, 2) initial (log lam, log k).
    Returns best (log lam, log k) per problem (B, 2), sse (B,), converged (B,).
    """
    B, S, _ = starts.shape
    n = x.shape[0]
    logx = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), -np.inf)
    Pb = np.broadcast_to(P[:, None, :], (B, S, n)).reshape(B * S, n)
    wb = np.broadcast_to(
        (w if w.ndim == 2 else w[None, :])[:, None, :], (B, S, n)
    ).reshape(B * S, n)
    sw = np.sqrt(wb)

    theta = starts.reshape(B * S, 2).astype(float).copy()
    F0, _ = _weibull_batch(theta, logx)
    r0 = sw * (Pb - F0)
    sse = np.einsum("pn,pn->p", r0, r0)
    _lm_iterate(theta, sse, logx, Pb, sw, gtol, max_iter)

    # the winning basin is decided by SSE alone: a gradient-shelf point (tiny
    # k makes the Jacobian vanish) must not shadow a better unpolished basin
    theta = theta.reshape(B, S, 2)
    sse = sse.reshape(B, S)
    best = np.argmin(sse, axis=1)
    idx = np.arange(B)
    theta_best = theta[idx, best].copy()
    sse_best = sse[idx, best].copy()

    # polish the winners until the gradient criterion holds
    Pb1 = np.ascontiguousarray(P)
    sw1 = np.sqrt(np.broadcast_to(w if w.ndim == 2 else w[None, :], (B, n)))
    converged = _lm_iterate(theta_best, sse_best, logx, Pb1, sw1, gtol, 2 * max_iter)

    thresholds = np.exp(theta_best[:, 0]) * LN2 ** np.exp(-theta_best[:, 1])
    at_corner = np.any(np.abs(theta_best) >= 79.0, axis=-1)
    usable = converged & ~at_corner & np.isfinite(thresholds) & (thresholds > 0)
    return theta_best, sse_best, usable


def _default_starts(x: np.ndarray) -> np.ndarray:
    """5x5 grid of (log lam, log k) initial guesses.

    Scales span the data range; slopes reach steep values because
    staircase-concentrated data is often best fit by a near-step curve.
    """
    pos = x[x > 0]
    lo = float(pos.min()) if pos.size else 0.1
    hi = float(pos.max()) if pos.size else 10.0
    lams = np.geomspace(max(lo / 2.0, 1e-6), hi * 2.0, 5)
    ks = np.geomspace(0.5, 24.0, 5)
    grid = np.stack(np.meshgrid(np.log(lams), np.log(ks), indexing="ij"), axis=-1)
    return grid.reshape(-1, 2)


def _check_fittable(P: np.ndarray):
    if P.shape[-1] < 2:
        raise FitError("need at least 2 distinct intensities")
    if np.ptp(P) <= 1e-12:
        raise FitError("degenerate data: all detection probabilities identical")


def fit_weibull_points(disparity, p_correct, weights) -> WeibullParams:
    """Weighted least-squares Weibull fit on probability points.

    Minimizes sum_d w_d * (P_d - F(d))^2 over lam, k > 0; converges to a
    gradient norm below 1e-8 in (log lam, log k).
    """
    x = np.asarray(disparity, dtype=float)
    P = np.asarray(p_correct, dtype=float)[None, :]
    w = np.asarray(weights, dtype=float)
    _check_fittable(P[0])
    starts = _default_starts(x)[None, :, :]
    theta, _, converged = _lm_weibull(x, P, w, starts)
    if not converged[0]:
        raise FitError("Weibull fit did not converge from any start")
    return WeibullParams(lam=float(np.exp(theta[0, 0])), k=float(np.exp(theta[0, 1])))


def fit_weibull(data: PsychometricDataset) -> WeibullParams:
    """Weighted least-squares Weibull fit, weights = per-intensity trial counts."""
    return fit_weibull_points(data.disparity, data.p_correct(), data.n_trials)


def _fit_weibull_many(x, P_rows, n_trials, warm_logparams):
    """Refit many resampled probability rows, warm-started; returns thresholds.

    Rows that are degenerate or fail to converge come back as NaN.
    """
    B = P_rows.shape[0]
    ok = np.ptp(P_rows, axis=1) > 1e-12
    thresholds = np.full(B, np.nan)
    if not ok.any():
        return thresholds
    idx = np.flatnonzero(ok)
    starts = np.broadcast_to(warm_logparams, (idx.size, 1, 2))
    theta, _, converged = _lm_weibull(x, P_rows[idx], n_trials.astype(float), starts)
    lam = np.exp(theta[:, 0])
    k = np.exp(theta[:, 1])
    t = lam * LN2 ** (1.0 / k)
    t[~converged] = np.nan
    thresholds[idx] = t
    return thresholds


def bootstrap_threshold(
    data: PsychometricDataset,
    n_boot: int = 100,
    seed: int = 0,
    theta: float | None = None,
    sigma: float | None = None,
    nonparametric: bool = False,
) -> ThresholdEstimate:
    """Threshold plus bootstrap std / relative uncertainty / outlier flag.

    Default scheme resamples each intensity row parametrically,
    c* ~ Binomial(n_d, c_d / n_d); ``nonparametric=True`` resamples whole
    trials with replacement instead. The point estimate T always comes from
    the fit to the original data, so it does not depend on the seed.
    """
    params = fit_weibull(data)
    T = threshold_from_fit(params)
    rng = np.random.default_rng(seed)
    n = data.n_trials
    if nonparametric:
        flat = np.repeat(data.disparity, n)
        outcomes = np.concatenate(
            [
                np.r_[np.ones(c), np.zeros(nd - c)]
                for nd, c in zip(data.n_trials, data.n_correct)
            ]
        )
        total = flat.size
        P_rows = np.empty((n_boot, data.disparity.size))
        counts_rows = np.empty((n_boot, data.disparity.size))
        for b in range(n_boot):
            pick = rng.integers(0, total, size=total)
            d_b, o_b = flat[pick], outcomes[pick]
            for j, x in enumerate(data.disparity):
                sel = d_b == x
                counts_rows[b, j] = max(int(sel.sum()), 1)
                P_rows[b, j] = o_b[sel].mean() if sel.any() else np.nan
        P_rows = np.nan_to_num(P_rows, nan=0.5)
        weights = counts_rows.mean(axis=0)
    else:
        P_hat = data.p_correct()
        c_star = rng.binomial(n[None, :], P_hat[None, :], size=(n_boot, n.size))
        P_rows = c_star / n[None, :]
        weights = n.astype(float)
    warm = np.array([math.log(params.lam), math.log(params.k)])
    thresholds = _fit_weibull_many(data.disparity, P_rows, weights, warm)
    good = thresholds[np.isfinite(thresholds)]
    if good.size < math.ceil(n_boot / 2):  # 50 of the default 100
        raise UnstableEstimateError(
            f"only {good.size}/{n_boot} bootstrap refits succeeded"
        )
    T_sigma = float(np.std(good, ddof=1))
    u = T_sigma / T
    weight = 1.0 / u**2 if u > 0 else math.inf
    return ThresholdEstimate(
        T=float(T),
        T_sigma=T_sigma,
        u=float(u),
        weight=float(weight),
        outlier=bool(u > OUTLIER_U),
        theta=theta,
        sigma=sigma,
    )


ESTIMATE_CSV_COLUMNS = ["theta", "sigma", "T", "T_sigma", "u", "weight", "outlier"]


def write_estimates_csv(path, estimates, extra_columns: dict | None = None) -> None:
    """Write estimates in the documented column order; extras appended by name."""
    extra_names = list(extra_columns) if extra_columns else []
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ESTIMATE_CSV_COLUMNS + extra_names)
        for i, e in enumerate(estimates):
            row = [e.theta, e.sigma, repr(e.T), repr(e.T_sigma), repr(e.u),
                   repr(e.weight), int(e.outlier)]
            row += [extra_columns[name][i] for name in extra_names]
            writer.writerow(row)


def read_estimates_csv(path) -> list[ThresholdEstimate]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(
                ThresholdEstimate(
                    T=float(row["T"]),
                    T_sigma=float(row["T_sigma"]),
                    u=float(row["u"]),
                    weight=float(row["weight"]),
                    outlier=bool(int(row["outlier"])),
                    theta=None if row["theta"] in ("", "None") else float(row["theta"]),
                    sigma=None if row["sigma"] in ("", "None") else float(row["sigma"]),
                )
            )
    return out
