"""Validation harness: staircases over inter-pupillary distance on half-split
scenes, full-resolution (ORG) versus foveated (FOV) styles, and the summary
statistics used to compare them.

The trial intensity here is the rendering IPD in millimeters: larger IPD
means larger scene disparities, and the observer's task is to say which half
of the scene has depth. Thresholds are extracted with the same psychometric
machinery as the ring experiment, just with IPD on the abscissa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import psychofit, staircase
from .display import DisplayModel
from .foveation import build_pyramid, budget_from_model, foveate
from .simobserver import ObserverSpec, observer_respond, _trial_rng
from .staircase import TrialRecord
from .stimulus import make_validation_scene

SCENES = ("forest-like", "kitchen-like")
STYLES = ("ORG", "FOV")
SIDES = ("left", "right")

# staircase bounds in millimeters; the lower bound keeps the uniform-prior
# starting intensity (the grid's geometric median) out of the deep-chance
# region, where maximum-likelihood placement is slow to recover
IPD_GRID_MIN = 0.5
IPD_GRID_MAX = 20.0


@dataclass(frozen=True)
class ValidationCondition:
    scene: str
    style: str

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"style must be one of {STYLES}")


@dataclass(frozen=True)
class IpdEstimate:
    T_ipd: float  # millimeters
    T_sigma: float
    u: float
    weight: float
    outlier: bool
    condition: ValidationCondition
    participant: str

    def __post_init__(self):
        if not 0 < self.T_ipd:
            raise ValueError("T_ipd must be positive")


def _default_pest_config() -> dict:
    return {"grid_min": IPD_GRID_MIN, "grid_max": IPD_GRID_MAX}


def run_validation_session(
    condition: ValidationCondition,
    observer: ObserverSpec,
    pest_config: dict | None = None,
    seed: int = 0,
    participant: str = "sim",
    display: DisplayModel | None = None,
    budget_model=None,
    render: bool = False,
    n_boot: int = 100,
) -> tuple[list[TrialRecord], IpdEstimate]:
    """One staircase over IPD for a scene/style condition.

    Each trial draws a random disparity side, optionally renders the
    half-split scene (foveating it for the FOV style), and asks the observer
    which side had depth. ``render=False`` skips image synthesis: the
    simulated observers answer from the IPD alone, so the statistics are
    unchanged and sweeps run at desk scale.
    """
    config = _default_pest_config()
    config.update(pest_config or {})
    state = staircase.pest_init(**config)
    trials: list[TrialRecord] = []
    budget = budget_from_model(budget_model) if budget_model is not None else None
    while not staircase.pest_is_done(state):
        index = state.trial_count
        ipd = staircase.pest_next_intensity(state)
        _, side = staircase.trial_randomization(seed, index, choices=SIDES)
        if render:
            if display is None:
                raise ValueError("render=True requires a display model")
            stim = make_validation_scene(ipd, side, scene_seed=seed * 1000 + index, display=display)
            if condition.style == "FOV":
                if budget is None:
                    raise ValueError("FOV rendering requires a budget model")
                gaze = ((display.width_px - 1) / 2.0, (display.height_px - 1) / 2.0)
                left = foveate(build_pyramid(stim.left, display=display), gaze, budget, display)
                right = foveate(build_pyramid(stim.right, display=display), gaze, budget, display)
                stim = type(stim)(
                    left=left,
                    right=right,
                    spec=None,
                    requested_disparity=stim.requested_disparity,
                    depth_map_id=stim.depth_map_id + "-fov",
                )
        response = observer_respond(
            observer, ipd, side, _trial_rng(observer.seed, index), choices=SIDES
        )
        correct = response == side
        trials.append(
            TrialRecord(
                index=index,
                disparity=ipd,
                highlight_target=side,
                phase_index=0,
                response=response,
                correct=correct,
                timestamp=float(index),
            )
        )
        state = staircase.pest_update(state, ipd, correct)
    dataset = psychofit.tally(trials)
    est = psychofit.bootstrap_threshold(dataset, n_boot=n_boot, seed=seed)
    # a fit extrapolating past the largest testable IPD is reported at the limit
    return trials, IpdEstimate(
        T_ipd=min(est.T, IPD_GRID_MAX),
        T_sigma=est.T_sigma,
        u=est.u,
        weight=est.weight,
        outlier=est.outlier,
        condition=condition,
        participant=participant,
    )


def change_rate(org: IpdEstimate, fov: IpdEstimate) -> float:
    """log(T_org / T_fov): positive when the foveated threshold is smaller."""
    if org.participant != fov.participant or org.condition.scene != fov.condition.scene:
        raise ValueError("change rate needs the same participant and scene")
    if org.condition.style != "ORG" or fov.condition.style != "FOV":
        raise ValueError("pass the ORG estimate first and the FOV estimate second")
    return math.log(org.T_ipd / fov.T_ipd)


@dataclass(frozen=True)
class ConditionSummary:
    condition: ValidationCondition
    n: int
    weighted_mean: float
    standard_error: float
    median: float
    q1: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    notch_lo: float
    notch_hi: float


def _summary_for(cond: ValidationCondition, values, weights) -> ConditionSummary:
    values = np.asarray(values, dtype=float)
    weights = np.minimum(np.asarray(weights, dtype=float), 1e15)
    n = values.size
    wmean = float(np.sum(weights * values) / np.sum(weights))
    if n > 1:
        se = float(np.std(values, ddof=1) / math.sqrt(n))
    else:
        se = 0.0
    q1, med, q3 = (float(q) for q in np.percentile(values, [25, 50, 75]))
    iqr = q3 - q1
    lo_lim, hi_lim = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    within = values[(values >= lo_lim) & (values <= hi_lim)]
    whisker_lo = float(within.min()) if within.size else q1
    whisker_hi = float(within.max()) if within.size else q3
    half_notch = 1.57 * iqr / math.sqrt(n)
    return ConditionSummary(
        condition=cond,
        n=n,
        weighted_mean=wmean,
        standard_error=se,
        median=med,
        q1=q1,
        q3=q3,
        whisker_lo=whisker_lo,
        whisker_hi=whisker_hi,
        notch_lo=med - half_notch,
        notch_hi=med + half_notch,
    )


def notches_overlap(a: ConditionSummary, b: ConditionSummary) -> bool:
    """True when the 95% median notches overlap (medians not significantly different)."""
    return a.notch_lo <= b.notch_hi and b.notch_lo <= a.notch_hi


def summarize(estimates: list[IpdEstimate]) -> dict:
    """Per-condition box statistics plus per-participant ORG/FOV change rates.

    Change rates use only participants with both a valid (non-outlier) ORG and
    FOV measurement for a scene. Conditions with fewer than two estimates are
    omitted with a warning entry.
    """
    by_condition: dict[ValidationCondition, list[IpdEstimate]] = {}
    for e in estimates:
        by_condition.setdefault(e.condition, []).append(e)
    summaries = []
    warnings_list = []
    for cond, group in sorted(
        by_condition.items(), key=lambda kv: (kv[0].scene, kv[0].style)
    ):
        if len(group) < 2:
            warnings_list.append(f"condition {cond.scene}/{cond.style}: fewer than 2 estimates, omitted")
            continue
        summaries.append(
            _summary_for(cond, [e.T_ipd for e in group], [e.weight for e in group])
        )

    changes = []
    by_ps: dict[tuple[str, str], dict[str, IpdEstimate]] = {}
    for e in estimates:
        if e.outlier:
            continue
        by_ps.setdefault((e.participant, e.condition.scene), {})[e.condition.style] = e
    for (participant, scene), styles in sorted(by_ps.items()):
        if "ORG" in styles and "FOV" in styles:
            changes.append(
                {
                    "participant": participant,
                    "scene": scene,
                    "change_rate": change_rate(styles["ORG"], styles["FOV"]),
                }
            )
    return {
        "conditions": summaries,
        "change_rates": changes,
        "warnings": warnings_list,
    }


def report_json_dict(summary: dict) -> dict:
    out = {"conditions": [], "change_rates": summary["change_rates"], "warnings": summary["warnings"]}
    for s in summary["conditions"]:
        out["conditions"].append(
            {
                "scene": s.condition.scene,
                "style": s.condition.style,
                "n": s.n,
                "weighted_mean": s.weighted_mean,
                "standard_error": s.standard_error,
                "median": s.median,
                "q1": s.q1,
                "q3": s.q3,
                "whisker_lo": s.whisker_lo,
                "whisker_hi": s.whisker_hi,
                "notch_lo": s.notch_lo,
                "notch_hi": s.notch_hi,
            }
        )
    return out


def write_results_csv(path, summary: dict) -> None:
    """One CSV mirroring the reported figure: per-condition stats rows plus
    per-participant change-rate rows, distinguished by a record column."""
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["record", "scene", "style", "participant", "n", "weighted_mean",
             "standard_error", "median", "q1", "q3", "whisker_lo", "whisker_hi",
             "notch_lo", "notch_hi", "change_rate"]
        )
        for s in summary["conditions"]:
            w.writerow(
                ["condition", s.condition.scene, s.condition.style, "", s.n,
                 repr(s.weighted_mean), repr(s.standard_error), repr(s.median),
                 repr(s.q1), repr(s.q3), repr(s.whisker_lo), repr(s.whisker_hi),
                 repr(s.notch_lo), repr(s.notch_hi), ""]
            )
        for c in summary["change_rates"]:
            w.writerow(
                ["change_rate", c["scene"], "", c["participant"], "", "", "", "",
                 "", "", "", "", "", "", repr(c["change_rate"])]
            )
