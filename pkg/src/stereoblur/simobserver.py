"""Simulated 2AFC observers for end-to-end pipeline verification.

An observer answers from a ground-truth chance-floored Weibull: the correct
label with probability (1 - lapse) * F(d) + lapse / 2, the other label
otherwise. A deterministic variant (correct iff above threshold) exists for
bracketing tests. Ground truth can be a fixed threshold or a surface model
evaluated at a condition.

Per-trial randomness is keyed on (seed, trial index), which makes a session
replayable and makes the in-process path byte-identical to a scripted client
driving the HTTP service with the same seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import psychofit, staircase
from .model import SurfaceModel, eval_threshold
from .psychofit import LN2, ThresholdEstimate
from .staircase import PestState, TrialRecord


@dataclass(frozen=True)
class ObserverSpec:
    true_threshold: float
    slope: float = staircase.DEFAULT_SLOPE
    lapse_rate: float = 0.0
    seed: int = 0
    deterministic: bool = False

    def __post_init__(self):
        if self.true_threshold <= 0:
            raise ValueError("true_threshold must be positive")
        if not 0 <= self.lapse_rate <= 0.1:
            raise ValueError("lapse_rate must be in [0, 0.1]")


def observer_from_model(
    model: SurfaceModel, theta: float, sigma: float, **kwargs
) -> ObserverSpec:
    """Ground-truth observer whose threshold comes from a surface model."""
    return ObserverSpec(
        true_threshold=eval_threshold(model, theta, sigma, extrapolate=True), **kwargs
    )


def p_correct(observer: ObserverSpec, presented: float) -> float:
    """Generative probability of a correct answer at a presented intensity."""
    if presented < 0:
        raise ValueError("presented intensity must be non-negative")
    lam = observer.true_threshold / LN2 ** (1.0 / observer.slope)
    F = 1.0 - 0.5 * math.exp(-((presented / lam) ** observer.slope))
    return (1.0 - observer.lapse_rate) * F + observer.lapse_rate * 0.5


def observer_respond(
    observer: ObserverSpec,
    presented: float,
    correct_answer: str,
    rng: np.random.Generator,
    choices=staircase.HIGHLIGHT_CHOICES,
) -> str:
    """One 2AFC answer; consumes exactly one uniform draw from rng."""
    psi = p_correct(observer, presented)
    draw = rng.random()
    if observer.deterministic:
        hit = psi > 0.75
    else:
        hit = draw < psi
    if hit:
        return correct_answer
    other = [c for c in choices if c != correct_answer]
    return other[0]


def _trial_rng(observer_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([int(observer_seed), 7919, int(trial_index)])
    )


def run_simulated_session(
    observer: ObserverSpec,
    condition: tuple[float, float] | None = None,
    pest_config: dict | None = None,
    session_seed: int | None = None,
    n_boot: int = 100,
) -> tuple[list[TrialRecord], ThresholdEstimate]:
    """Drive one full staircase session and extract its threshold estimate.

    Matches the live protocol: per trial, the staircase proposes an intensity,
    the highlight target and depth-map phase are drawn from the session seed,
    and the observer answers. Fully deterministic given the seeds.
    """
    state = staircase.pest_init(**(pest_config or {}))
    session_seed = observer.seed if session_seed is None else session_seed
    trials: list[TrialRecord] = []
    while not staircase.pest_is_done(state):
        index = state.trial_count
        intensity = staircase.pest_next_intensity(state)
        phase_index, target = staircase.trial_randomization(session_seed, index)
        response = observer_respond(
            observer, intensity, target, _trial_rng(observer.seed, index)
        )
        correct = response == target
        trials.append(
            TrialRecord(
                index=index,
                disparity=intensity,
                highlight_target=target,
                phase_index=phase_index,
                response=response,
                correct=correct,
                timestamp=float(index),
            )
        )
        state = staircase.pest_update(state, intensity, correct)
    theta, sigma = condition if condition is not None else (None, None)
    dataset = psychofit.tally(trials)
    estimate = psychofit.bootstrap_threshold(
        dataset, n_boot=n_boot, seed=session_seed, theta=theta, sigma=sigma
    )
    return trials, estimate


def run_pest_only(
    observer: ObserverSpec,
    pest_config: dict | None = None,
    session_seed: int | None = None,
) -> tuple[list[TrialRecord], float]:
    """Staircase-only session; returns trials and the final ML estimate."""
    state = staircase.pest_init(**(pest_config or {}))
    session_seed = observer.seed if session_seed is None else session_seed
    trials: list[TrialRecord] = []
    while not staircase.pest_is_done(state):
        index = state.trial_count
        intensity = staircase.pest_next_intensity(state)
        phase_index, target = staircase.trial_randomization(session_seed, index)
        response = observer_respond(
            observer, intensity, target, _trial_rng(observer.seed, index)
        )
        trials.append(
            TrialRecord(
                index=index,
                disparity=intensity,
                highlight_target=target,
                phase_index=phase_index,
                response=response,
                correct=response == target,
                timestamp=float(index),
            )
        )
        state = staircase.pest_update(state, intensity, response == target)
    return trials, staircase.pest_estimate(state)
