"""Stereoacuity-under-blur toolkit.

Stimulus synthesis, adaptive 2AFC threshold estimation, psychometric and
surface fitting, a closed-form perceptual model of stereoacuity versus
eccentricity and blur, foveation blur budgets, and a session service for
live experiments.
"""

from .display import DisplayModel, arcmin_to_px, eccentricity_of, px_to_arcmin
from .model import (
    ExpCurve,
    SurfaceModel,
    blur_budget_map,
    default_paper_model,
    eval_threshold,
    optimal_blur,
    sigma_from_cutoff,
)
from .psychofit import (
    PsychometricDataset,
    ThresholdEstimate,
    WeibullParams,
    bootstrap_threshold,
    fit_weibull,
    tally,
    threshold_from_fit,
    weibull_eval,
)
from .staircase import (
    PestState,
    TrialRecord,
    pest_init,
    pest_is_done,
    pest_next_intensity,
    pest_update,
)
from .stimulus import (
    RingSpec,
    StereoStimulus,
    apply_disparity,
    condition_grid,
    corrugation_peak,
    csf_peak,
    make_depth_map,
    make_ring_spec,
    make_validation_scene,
    preblur,
    render_dot_texture,
    render_highlights,
    render_stimulus,
)
from .surfacefit import ParabolaParams, assemble_surface, fit_exponential, fit_parabola

__version__ = "0.1.0"
