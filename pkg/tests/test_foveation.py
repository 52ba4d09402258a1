import numpy as np
import pytest

from stereoblur.display import DisplayModel
from stereoblur.foveation import (
    BlurPyramid,
    budget_from_model,
    budget_from_table,
    build_pyramid,
    foveate,
)
from stereoblur.model import default_paper_model, optimal_blur


@pytest.fixture
def noise_img():
    return np.random.default_rng(0).random((256, 256))


class TestBuildPyramid:
    def test_level_zero_is_input(self, noise_img, display30):
        pyr = build_pyramid(noise_img, display=display30)
        assert np.array_equal(pyr.levels[0], noise_img)
        assert len(pyr.levels) == 6

    def test_custom_sigmas(self, noise_img, display30):
        pyr = build_pyramid(noise_img, sigmas=(0.0, 4.0, 12.0), display=display30)
        assert pyr.sigmas == (0.0, 4.0, 12.0)

    def test_variance_decreases(self, noise_img, display30):
        pyr = build_pyramid(noise_img, display=display30)
        variances = [lvl.var() for lvl in pyr.levels]
        assert all(a > b for a, b in zip(variances, variances[1:]))

    def test_unsorted_rejected(self, noise_img, display30):
        with pytest.raises(ValueError):
            build_pyramid(noise_img, sigmas=(0.0, 8.0, 4.0), display=display30)
        with pytest.raises(ValueError):
            build_pyramid(noise_img, sigmas=(2.0, 4.0), display=display30)

    def test_pyramid_validation(self, noise_img):
        with pytest.raises(ValueError):
            BlurPyramid(sigmas=(0.0, 2.0), levels=(noise_img,))
        with pytest.raises(ValueError):
            BlurPyramid(sigmas=(0.0, 2.0), levels=(noise_img, noise_img[:-1]))


class TestFoveate:
    def test_zero_budget_identity(self, noise_img, display30):
        pyr = build_pyramid(noise_img, display=display30)
        out = foveate(pyr, (127.5, 127.5), lambda e: np.zeros_like(e), display30)
        assert np.array_equal(out, noise_img)

    def test_idempotent_at_zero_budget(self, noise_img, display30):
        pyr = build_pyramid(noise_img, display=display30)
        zero = lambda e: np.zeros_like(e)
        once = foveate(pyr, (127.5, 127.5), zero, display30)
        twice = foveate(build_pyramid(once, display=display30), (127.5, 127.5), zero, display30)
        assert np.array_equal(once, twice)

    def test_gaze_blend_weights(self, display30):
        # at the gaze pixel the model budget is 1.35', which blends levels
        # 0 and 2' with weight 0.675 on the blurred level
        img = np.random.default_rng(1).random((101, 101))
        pyr = build_pyramid(img, display=display30)
        model = default_paper_model()
        out = foveate(pyr, (50, 50), budget_from_model(model), display30)
        frac = 1.35 / 2.0
        expected = (1 - frac) * pyr.levels[0][50, 50] + frac * pyr.levels[1][50, 50]
        # the global range remap is affine; undo it from the known ranges
        blend = np.empty_like(img)
        ecc = np.hypot(*np.mgrid[0:101, 0:101] - 50.0) / display30.ppd
        target = np.clip(optimal_blur(model, np.clip(ecc, 0, 20)), 0, 32.0)
        hi = np.clip(np.searchsorted(np.array(pyr.sigmas), target), 1, 5)
        lo = hi - 1
        sig = np.array(pyr.sigmas)
        f = (target - sig[lo]) / (sig[hi] - sig[lo])
        rows, cols = np.mgrid[0:101, 0:101]
        stack = np.stack(pyr.levels)
        blend = (1 - f) * stack[lo, rows, cols] + f * stack[hi, rows, cols]
        gain = (img.max() - img.min()) / (blend.max() - blend.min())
        remapped = (expected - blend.min()) * gain + img.min()
        assert out[50, 50] == pytest.approx(remapped, abs=1e-9)

    def test_range_remap(self, noise_img, display30):
        pyr = build_pyramid(noise_img, display=display30)
        out = foveate(pyr, (127.5, 127.5), budget_from_model(default_paper_model()), display30)
        assert out.min() == pytest.approx(noise_img.min(), abs=1 / 255)
        assert out.max() == pytest.approx(noise_img.max(), abs=1 / 255)

    def test_target_above_top_level_clamps(self, noise_img, display30):
        pyr = build_pyramid(noise_img, sigmas=(0.0, 2.0), display=display30)
        out = foveate(pyr, (127.5, 127.5), lambda e: np.full_like(e, 99.0), display30)
        # everything blends to the top level, then gets range-remapped
        top = pyr.levels[1]
        gain = (noise_img.max() - noise_img.min()) / (top.max() - top.min())
        expected = (top - top.min()) * gain + noise_img.min()
        assert np.allclose(out, expected, atol=1e-12)

    def test_gaze_bounds(self, noise_img, display30):
        pyr = build_pyramid(noise_img, display=display30)
        with pytest.raises(ValueError):
            foveate(pyr, (-1, 10), lambda e: np.zeros_like(e), display30)

    def test_black_pixels_excluded_from_remap(self, display30):
        img = np.random.default_rng(2).random((128, 128)) * 0.5 + 0.4
        img[40:60, 40:60] = 0.0  # blacked-out region
        pyr = build_pyramid(img, display=display30)
        out = foveate(pyr, (64, 64), budget_from_model(default_paper_model()), display30)
        visible = img > 0
        assert out[visible].min() == pytest.approx(img[visible].min(), abs=1e-9)
        assert out[visible].max() == pytest.approx(img[visible].max(), abs=1e-9)

    def test_total_variation_monotone_in_budget(self, display30):
        def tv(a):
            return np.abs(np.diff(a, axis=0)).sum() + np.abs(np.diff(a, axis=1)).sum()

        model = default_paper_model()
        small = budget_from_model(model)
        rng = np.random.default_rng(5)
        wins = 0
        trials = 20
        for _ in range(trials):
            img = rng.random((96, 96))
            pyr = build_pyramid(img, display=display30)
            lo = foveate(pyr, (47.5, 47.5), small, display30)
            hi = foveate(pyr, (47.5, 47.5), lambda e: 2.5 * np.asarray(small(e)), display30)
            wins += tv(hi) <= tv(lo)
        assert wins >= 0.95 * trials

    def test_rotational_symmetry_of_blur(self, display30):
        # high-pass energy in one annulus compared across the four quadrants;
        # pooled over probe images to beat the variance-estimator noise
        yy, xx = np.mgrid[0:201, 0:201]
        r = np.hypot(xx - 100, yy - 100)
        ann = (r > 55) & (r < 85)
        quads = np.zeros(4)
        for seed in range(10):
            img = np.random.default_rng(seed).random((201, 201))
            pyr = build_pyramid(img, display=display30)
            out = foveate(pyr, (100, 100), budget_from_model(default_paper_model()), display30)
            resid = out - build_pyramid(out, sigmas=(0.0, 4.0), display=display30).levels[1]
            quads += [
                resid[(yy < 100) & (xx < 100) & ann].var(),
                resid[(yy < 100) & (xx >= 100) & ann].var(),
                resid[(yy >= 100) & (xx < 100) & ann].var(),
                resid[(yy >= 100) & (xx >= 100) & ann].var(),
            ]
        assert quads.max() / quads.min() < 1.10


def test_budget_from_table():
    budget = budget_from_table([0.0, 10.0, 20.0], [1.0, 5.0, 12.0])
    assert budget(0.0) == 1.0
    assert budget(5.0) == pytest.approx(3.0)
    assert budget(25.0) == 12.0  # clamped beyond the table
    with pytest.raises(ValueError):
        budget_from_table([0.0, 0.0], [1.0, 2.0])


def test_budget_from_model_clamps():
    model = default_paper_model()
    budget = budget_from_model(model)
    assert budget(np.array([0.0]))[0] == pytest.approx(1.35)
    assert budget(np.array([50.0]))[0] == pytest.approx(optimal_blur(model, 20.0))
