import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stereoblur.display import DisplayModel
from stereoblur.model import (
    ExpCurve,
    SurfaceModel,
    blur_budget_map,
    default_paper_model,
    eval_threshold,
    load_budget_map,
    optimal_blur,
    save_budget_map,
    sigma_from_cutoff,
)

M = default_paper_model()

# frozen from an independent high-precision evaluation of the parameter curves
P2_10 = 5.702648574125242
P2_20 = 12.196037217158338
P3_20 = 0.9234214769275067
M_0_0 = 0.16546750003772575


def test_published_coefficients():
    assert M.p1.a == 2.07e-11
    assert M.p1.b == 0.87
    assert M.p1.c == 0.003
    assert M.p2 == ExpCurve(8.85, 0.04, -7.5)
    assert M.p3 == ExpCurve(0.04, 0.15, 0.12)
    assert M.theta_range == (0.0, 20.0)
    assert M.sigma_range == (0.0, 15.0)
    assert M.p1_constant == 0.0034


def test_eval_hand_values():
    assert eval_threshold(M, 0.0, 1.35) == pytest.approx(0.16, abs=1e-12)
    assert eval_threshold(M, 0.0, 0.0) == pytest.approx(M_0_0, rel=1e-12)
    assert eval_threshold(M, 20.0, P2_20, extrapolate=True) == pytest.approx(P3_20, rel=1e-12)


def test_optimal_blur_values():
    # coefficient-derived vertices; the rounded prose values 5.41'/11.33'
    # differ by ~5-8% and are intentionally not reproduced
    assert optimal_blur(M, 0.0) == pytest.approx(1.35, abs=1e-12)
    assert optimal_blur(M, 10.0) == pytest.approx(P2_10, rel=1e-12)
    assert optimal_blur(M, 20.0) == pytest.approx(P2_20, rel=1e-12)


def test_range_errors_and_extrapolation():
    with pytest.raises(ValueError):
        eval_threshold(M, 25.0, 3.0)
    with pytest.raises(ValueError):
        eval_threshold(M, 10.0, 16.0)
    with pytest.raises(ValueError):
        eval_threshold(M, -1.0, 3.0, extrapolate=True)
    with pytest.raises(ValueError):
        optimal_blur(M, 21.0)
    assert eval_threshold(M, 25.0, 3.0, extrapolate=True) > 0
    assert eval_threshold(M, 10.0, 16.0, extrapolate=True) > 0


@given(theta=st.floats(0.0, 20.0))
@settings(max_examples=80)
def test_vertex_identity(theta):
    sigma = float(M.p2(theta))
    if not 0 <= sigma <= 15:
        sigma = min(max(sigma, 0.0), 15.0)
        assert eval_threshold(M, theta, sigma) >= float(M.p3(theta))
        return
    assert eval_threshold(M, theta, sigma) == float(M.p3(theta))


@given(theta=st.floats(0.0, 20.0), sigma=st.floats(0.0, 15.0))
@settings(max_examples=80)
def test_constant_p1_difference_formula(theta, sigma):
    full = eval_threshold(M, theta, sigma, mode="printed-p1")
    const = eval_threshold(M, theta, sigma, mode="constant-p1")
    expected_diff = (float(M.p1(theta)) - M.p1_constant) * (sigma - float(M.p2(theta))) ** 2
    assert full - const == pytest.approx(expected_diff, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("theta", [0.0, 5.0, 10.0, 14.0])
def test_modes_agree_at_vertex(theta):
    sigma = float(M.p2(theta))
    assert 0 <= sigma <= 15
    full = eval_threshold(M, theta, sigma, mode="printed-p1")
    const = eval_threshold(M, theta, sigma, mode="constant-p1")
    assert full == const == float(M.p3(theta))


def test_p2_p3_strictly_increasing():
    thetas = np.linspace(0, 20, 401)
    for curve in (M.p2, M.p3):
        vals = curve(thetas)
        assert np.all(np.diff(vals) > 0)


def test_sigma_from_cutoff_values():
    assert sigma_from_cutoff(4.1) == pytest.approx(6.98729018452223, rel=1e-12)
    assert sigma_from_cutoff(3.0 / (2 * math.pi)) == pytest.approx(60.0, rel=1e-12)
    assert sigma_from_cutoff(1e9) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ValueError):
        sigma_from_cutoff(0.0)
    with pytest.raises(ValueError):
        sigma_from_cutoff(-2.0)


@given(f=st.floats(0.01, 1000.0))
@settings(max_examples=100)
def test_sigma_cutoff_product_invariant(f):
    assert sigma_from_cutoff(f) * f == pytest.approx(90.0 / math.pi, rel=1e-12)


def test_sigma_cutoff_strictly_decreasing():
    f = np.geomspace(0.1, 100, 50)
    assert np.all(np.diff(sigma_from_cutoff(f)) < 0)


def test_blur_budget_map_values():
    d = DisplayModel(width_px=301, height_px=301, ppd=3.0)
    budget = blur_budget_map(M, d, (150, 150))
    assert budget.shape == (301, 301)
    assert budget[150, 150] == pytest.approx(1.35, abs=1e-12)
    assert budget[150, 180] == pytest.approx(P2_10, rel=1e-12)  # 30 px = 10 deg
    # 40 deg clamps to the 20-deg budget
    assert budget[150, 270] == pytest.approx(optimal_blur(M, 20.0), rel=1e-12)


def test_blur_budget_map_radial_symmetry():
    d = DisplayModel(width_px=101, height_px=101, ppd=4.0)
    budget = blur_budget_map(M, d, (50, 50))
    assert np.allclose(budget, budget[::-1, :])
    assert np.allclose(budget, budget[:, ::-1])
    assert np.allclose(budget, budget.T)


def test_blur_budget_map_gaze_bounds():
    d = DisplayModel(width_px=101, height_px=101, ppd=4.0)
    with pytest.raises(ValueError):
        blur_budget_map(M, d, (101, 50))


def test_model_json_roundtrip(tmp_path):
    path = tmp_path / "model.json"
    M.save(path)
    again = SurfaceModel.load(path)
    assert again == M


def test_budget_map_image_roundtrip(tmp_path):
    d = DisplayModel(width_px=64, height_px=48, ppd=2.0)
    budget = blur_budget_map(M, d, (32, 24))
    img_path = tmp_path / "budget.png"
    save_budget_map(budget, img_path)
    back = load_budget_map(img_path)
    assert back.shape == budget.shape
    # 16-bit encoding quantizes at 0.01 arcmin
    assert np.abs(back - budget).max() <= 0.005 + 1e-12
