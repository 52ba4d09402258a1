"""Best PEST: adaptive 2AFC trial placement at the maximum-likelihood threshold.

Each trial is presented at the grid candidate with the highest posterior
log-likelihood, the defining Best PEST rule. The likelihood model is the same
chance-floored Weibull used for threshold extraction, reparameterized so each
candidate's 75% point is the candidate itself, with a fixed assumed slope and
a lapse ceiling that keeps one stray error from collapsing the likelihood.

The procedure stops after a fixed trial cap (default 60); an optional
likelihood-concentration early stop can be enabled on top. State is a value:
updates return new states, so sessions replay deterministically from a log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .psychofit import LN2

DEFAULT_GRID_MIN = 0.05
DEFAULT_GRID_MAX = 30.0
DEFAULT_N_GRID = 64
DEFAULT_SLOPE = 1.5
DEFAULT_LAPSE = 0.02
DEFAULT_MAX_TRIALS = 60

HIGHLIGHT_CHOICES = ("peaks", "troughs")
N_PHASE_MAPS = 5


class StaircaseDone(RuntimeError):
    """Raised when querying or updating a finished staircase."""


@dataclass(frozen=True)
class TrialRecord:
    index: int
    disparity: float
    highlight_target: str
    phase_index: int
    response: str
    correct: bool
    timestamp: float = 0.0

    def __post_init__(self):
        if self.correct != (self.response == self.highlight_target):
            raise ValueError("correct flag inconsistent with response/target")


@dataclass(frozen=True)
class PestState:
    """Likelihood state over log-spaced threshold candidates."""

    grid: np.ndarray
    log_likelihood: np.ndarray
    trial_count: int = 0
    max_trials: int = DEFAULT_MAX_TRIALS
    slope: float = DEFAULT_SLOPE
    lapse_rate: float = DEFAULT_LAPSE
    early_stop: bool = False
    early_stop_mass: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        object.__setattr__(
            self, "log_likelihood", np.asarray(self.log_likelihood, dtype=float)
        )
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(self.log_likelihood)):
            raise ValueError("likelihood must be finite")


def pest_init(
    grid_min: float = DEFAULT_GRID_MIN,
    grid_max: float = DEFAULT_GRID_MAX,
    n_grid: int = DEFAULT_N_GRID,
    slope: float = DEFAULT_SLOPE,
    lapse_rate: float = DEFAULT_LAPSE,
    max_trials: int = DEFAULT_MAX_TRIALS,
    early_stop: bool = False,
) -> PestState:
    """Uniform prior over log-spaced threshold candidates."""
    if not 0 < grid_min < grid_max:
        raise ValueError("require 0 < grid_min < grid_max")
    if n_grid < 16:
        raise ValueError("n_grid must be at least 16")
    if not 0 <= lapse_rate < 0.5:
        raise ValueError("lapse_rate must be in [0, 0.5)")
    grid = np.geomspace(grid_min, grid_max, n_grid)
    grid[0], grid[-1] = grid_min, grid_max  # exact endpoints
    return PestState(
        grid=grid,
        log_likelihood=np.zeros(n_grid),
        max_trials=max_trials,
        slope=slope,
        lapse_rate=lapse_rate,
        early_stop=early_stop,
    )


def _argmax_middle(values: np.ndarray) -> int:
    """Index of the maximum; exact ties resolve to the middle of the tied run.

    A two-way tie lands on the smaller candidate; the all-tied uniform prior
    lands on the grid's (lower) geometric median.
    """
    tied = np.flatnonzero(values == values.max())
    return int(tied[(tied.size - 1) // 2])


def pest_is_done(state: PestState) -> bool:
    if state.trial_count >= state.max_trials:
        return True
    if state.early_stop and state.trial_count > 0:
        post = np.exp(state.log_likelihood - state.log_likelihood.max())
        post /= post.sum()
        peak = _argmax_middle(state.log_likelihood)
        lo, hi = max(0, peak - 2), min(post.size, peak + 3)
        return float(post[lo:hi].sum()) >= state.early_stop_mass
    return False


def pest_next_intensity(state: PestState) -> float:
    """The maximum-likelihood threshold candidate: the next presented disparity."""
    if pest_is_done(state):
        raise StaircaseDone("staircase already finished")
    return float(state.grid[_argmax_middle(state.log_likelihood)])


def _psychometric_matrix(state: PestState, presented: float) -> np.ndarray:
    """P(correct | candidate threshold) for one presented intensity, per candidate.

    The ceiling keeps log(1 - p) finite even at lapse 0, so a single error at
    a saturated intensity penalizes rather than annihilates a candidate.
    """
    lam = state.grid / LN2 ** (1.0 / state.slope)
    F = 1.0 - 0.5 * np.exp(-((presented / lam) ** state.slope))
    return np.clip(F, 0.5, 1.0 - max(state.lapse_rate, 1e-12))


def pest_update(state: PestState, presented: float, correct: bool) -> PestState:
    """Fold one response into the likelihood; returns the successor state."""
    if state.trial_count >= state.max_trials:
        raise StaircaseDone("staircase already finished")
    if presented < 0:
        raise ValueError("presented intensity must be non-negative")
    p = _psychometric_matrix(state, presented)
    ll = state.log_likelihood + (np.log(p) if correct else np.log1p(-p))
    return replace(state, log_likelihood=ll, trial_count=state.trial_count + 1)


def pest_estimate(state: PestState) -> float:
    """Current ML threshold estimate (same placement rule as the next trial)."""
    return float(state.grid[_argmax_middle(state.log_likelihood)])


def trial_randomization(
    session_seed: int, trial_index: int, choices=HIGHLIGHT_CHOICES
) -> tuple[int, str]:
    """Per-trial (phase_index, target label), deterministic in the session seed.

    Shared by the in-process simulator and the HTTP service so that both paths
    produce identical trial sequences for identical seeds. Validation sessions
    pass side labels as choices.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(session_seed), int(trial_index)]))
    phase_index = int(rng.integers(0, N_PHASE_MAPS))
    target = choices[int(rng.integers(0, len(choices)))]
    return phase_index, target


TRIAL_CSV_COLUMNS = [
    "index",
    "disparity",
    "highlight_target",
    "phase_index",
    "response",
    "correct",
    "timestamp",
]


def trial_to_row(t: TrialRecord) -> list:
    return [
        t.index,
        repr(float(t.disparity)),
        t.highlight_target,
        t.phase_index,
        t.response,
        int(t.correct),
        repr(float(t.timestamp)),
    ]


def write_trials_csv(path_or_file, trials) -> None:
    import csv

    def _write(f):
        w = csv.writer(f)
        w.writerow(TRIAL_CSV_COLUMNS)
        for t in trials:
            w.writerow(trial_to_row(t))

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as f:
            _write(f)


def read_trials_csv(path_or_file) -> list[TrialRecord]:
    import csv

    def _read(f):
        return [
            TrialRecord(
                index=int(r["index"]),
                disparity=float(r["disparity"]),
                highlight_target=r["highlight_target"],
                phase_index=int(r["phase_index"]),
                response=r["response"],
                correct=bool(int(r["correct"])),
                timestamp=float(r["timestamp"]),
            )
            for r in csv.DictReader(f)
        ]

    if hasattr(path_or_file, "read"):
        return _read(path_or_file)
    with open(path_or_file, newline="") as f:
        return _read(f)
