"""Ring stimulus synthesis: random-dot texture, calibrated blur, sinusoidal
depth corrugations, disparity warping, dithered border, extrema highlights;
plus the half-split validation scenes.

Geometry convention: stimuli are rendered on a square canvas centered on the
gaze point. The ring is the annulus [max(0, theta - width/2), theta + width/2]
in eccentricity; at zero eccentricity it degenerates to a disk. The texture is
a 50% random binary dot pattern whose dot pitch is half a cycle of the peak
contrast-sensitivity frequency for the ring's eccentricity, so two dots span
one cycle. Depth corrugations run radially (so many cycles around the ring)
except at the fovea, where they are horizontal stripes.

The right eye's image is resampled from the left along the horizontal axis,
with the shift scaled by the depth map; troughs (depth 0) stay untouched,
peaks (depth 1) carry the full requested disparity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np
from scipy import ndimage

from .display import DisplayModel, arcmin_to_px

BACKGROUND = 0.5

RING_WIDTH_DEG = {0.0: 6.7, 10.0: 3.8, 20.0: 5.0}
CSF_PEAK_CPD = {0.0: 4.1, 10.0: 1.8, 20.0: 1.3}
CORRUGATION_PEAK_CPD = {0.0: 0.3, 10.0: 0.133, 20.0: 0.073}
CORRUGATION_CYCLES = {0.0: 2, 10.0: 8, 20.0: 9}
PHASE_STEP = 0.4 * math.pi

# Table of tested (eccentricity deg, blur sigma arcmin) conditions
CONDITION_SIGMAS = {
    0.0: (0.0, 3.0, 6.0, 9.0, 12.0, 15.0),
    10.0: (0.0, 2.9, 5.8, 8.7, 11.6, 14.6),
    20.0: (0.0, 2.6, 5.3, 8.0, 10.6, 13.3, 26.6),
}

DITHER_KEEP_PROB = 0.5
HIGHLIGHT_GAP_DEG = 0.2
HIGHLIGHT_LEN_DEG = 0.45
HIGHLIGHT_THICK_DEG = 0.1
VALIDATION_BLACKOUT_DEG = 15.0


class ResolutionError(ValueError):
    """Dot pitch falls below one pixel at the given display calibration."""


def condition_grid() -> list[tuple[float, float]]:
    """All tested (theta, sigma) permutations, row-major by eccentricity."""
    return [(th, sg) for th, sigmas in CONDITION_SIGMAS.items() for sg in sigmas]


def csf_peak(theta: float, interpolate: bool = False) -> float:
    """Peak contrast-sensitivity frequency (cpd) at an eccentricity.

    Tabulated at 0/10/20 deg; other eccentricities are log-linearly
    interpolated when requested.
    """
    if theta < 0:
        raise ValueError("eccentricity must be non-negative")
    if theta in CSF_PEAK_CPD:
        return CSF_PEAK_CPD[theta]
    if not interpolate:
        raise ValueError(f"no tabulated value at theta={theta}; pass interpolate=True")
    xs = np.array(sorted(CSF_PEAK_CPD))
    ys = np.log([CSF_PEAK_CPD[x] for x in xs])
    return float(np.exp(np.interp(theta, xs, ys)))


def corrugation_peak(theta: float) -> float:
    """Peak depth-corrugation frequency (cpd) at a tabulated eccentricity."""
    if theta < 0:
        raise ValueError("eccentricity must be non-negative")
    try:
        return CORRUGATION_PEAK_CPD[theta]
    except KeyError:
        raise ValueError(f"no corrugation frequency tabulated at theta={theta}") from None


@dataclass(frozen=True)
class RingSpec:
    theta: float
    width_deg: float
    dot_frequency_cpd: float
    sigma_arcmin: float
    corrugation_cycles: int
    corrugation_cpd: float
    phase_index: int
    highlight_target: str = "peaks"
    seed: int = 0

    def __post_init__(self):
        if self.width_deg <= 0 or self.dot_frequency_cpd <= 0:
            raise ValueError("width and dot frequency must be positive")
        if self.corrugation_cycles < 1:
            raise ValueError("corrugation_cycles must be >= 1")
        if not 0 <= self.phase_index <= 4:
            raise ValueError("phase_index must be in 0..4")
        if self.highlight_target not in ("peaks", "troughs"):
            raise ValueError("highlight_target must be 'peaks' or 'troughs'")

    @property
    def orientation(self) -> str:
        return "radial" if self.theta > 0 else "horizontal"

    @property
    def inner_deg(self) -> float:
        return max(0.0, self.theta - self.width_deg / 2)

    @property
    def outer_deg(self) -> float:
        return self.theta + self.width_deg / 2

    def to_json_dict(self) -> dict:
        return {
            "theta": self.theta,
            "width_deg": self.width_deg,
            "dot_frequency_cpd": self.dot_frequency_cpd,
            "sigma_arcmin": self.sigma_arcmin,
            "corrugation_cycles": self.corrugation_cycles,
            "corrugation_cpd": self.corrugation_cpd,
            "phase_index": self.phase_index,
            "highlight_target": self.highlight_target,
            "seed": self.seed,
        }


def make_ring_spec(
    theta: float,
    sigma_arcmin: float,
    phase_index: int = 0,
    highlight_target: str = "peaks",
    seed: int = 0,
) -> RingSpec:
    """Ring parameters for one of the tested eccentricities."""
    if theta not in RING_WIDTH_DEG:
        raise ValueError(f"unsupported eccentricity {theta}; tested values are 0, 10, 20")
    return RingSpec(
        theta=theta,
        width_deg=RING_WIDTH_DEG[theta],
        dot_frequency_cpd=csf_peak(theta),
        sigma_arcmin=sigma_arcmin,
        corrugation_cycles=CORRUGATION_CYCLES[theta],
        corrugation_cpd=corrugation_peak(theta),
        phase_index=phase_index,
        highlight_target=highlight_target,
        seed=seed,
    )


def canvas_size_px(spec: RingSpec, display: DisplayModel) -> int:
    """Square canvas side fitting the ring, its highlights and the blur skirt."""
    margin_deg = HIGHLIGHT_GAP_DEG + HIGHLIGHT_LEN_DEG + 0.3 + 4.0 * spec.sigma_arcmin / 60.0
    half_deg = spec.outer_deg + margin_deg
    return 2 * int(math.ceil(half_deg * display.ppd)) + 1


def _radius_map_deg(shape, display: DisplayModel) -> np.ndarray:
    h, w = shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w]
    return np.hypot(xs - cx, ys - cy) / display.ppd


def ring_annulus_mask(spec: RingSpec, display: DisplayModel, shape) -> np.ndarray:
    r = _radius_map_deg(shape, display)
    return (r >= spec.inner_deg) & (r <= spec.outer_deg)


def render_dot_texture(spec: RingSpec, display: DisplayModel) -> np.ndarray:
    """50% random binary dots inside the ring annulus, dithered at the border.

    The dot edge is half a cycle of the spec's dot frequency. Cells straddling
    the annulus edge are kept whole with 50% probability (and dropped whole
    otherwise), which breaks the ring's contour into a ragged, one-dot-deep
    dithered band.
    """
    dot_deg = (1.0 / spec.dot_frequency_cpd) / 2.0
    dot_px = dot_deg * display.ppd
    if dot_px < 1.0:
        raise ResolutionError(
            f"dot pitch {dot_px:.3f} px below one pixel (need ppd >= {1/dot_deg:.1f})"
        )
    size = canvas_size_px(spec, display)
    shape = (size, size)
    r = _radius_map_deg(shape, display)
    inside = (r >= spec.inner_deg) & (r <= spec.outer_deg)

    rows = np.floor(np.arange(size) / dot_px).astype(np.int64)
    cell_i, cell_j = np.meshgrid(rows, rows, indexing="ij")
    n_cells = rows[-1] + 1
    cell_id = cell_i * n_cells + cell_j

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed]))
    values = rng.integers(0, 2, size=n_cells * n_cells).astype(np.float64)
    keep = rng.random(n_cells * n_cells) < DITHER_KEEP_PROB

    # classify cells by whether they are wholly inside / outside the annulus
    flat_id = cell_id.ravel()
    all_in = np.ones(n_cells * n_cells, dtype=bool)
    any_in = np.zeros(n_cells * n_cells, dtype=bool)
    np.logical_and.at(all_in, flat_id, inside.ravel())
    np.logical_or.at(any_in, flat_id, inside.ravel())
    boundary = any_in & ~all_in

    drawn = all_in | (boundary & keep)
    img = np.full(shape, BACKGROUND)
    pick = drawn[cell_id]
    img[pick] = values[cell_id[pick]]
    return img


def gaussian_blur(img: np.ndarray, sigma_arcmin: float, display: DisplayModel) -> np.ndarray:
    """Gaussian filter with std in visual angle; mirror edges.

    The kernel is supported out to 8 std: wide enough that the discrete
    filter's transfer function tracks the analytic Gaussian down to the
    float64 measurement floor, far past the required 3-std minimum.
    """
    if sigma_arcmin < 0:
        raise ValueError("sigma must be non-negative")
    if sigma_arcmin == 0:
        return img.copy()
    sigma_px = float(arcmin_to_px(display, sigma_arcmin))
    return ndimage.gaussian_filter(img, sigma_px, mode="mirror", truncate=8.0)


def contrast_stretch(img: np.ndarray, reference: np.ndarray, mask=None) -> np.ndarray:
    """Linearly map img so its min/max inside mask match the reference's."""
    region = mask if mask is not None else np.ones(img.shape, dtype=bool)
    lo, hi = img[region].min(), img[region].max()
    ref_lo, ref_hi = reference[region].min(), reference[region].max()
    if hi == lo:
        return img.copy()
    if lo == ref_lo and hi == ref_hi:
        return img.copy()
    return (img - lo) * ((ref_hi - ref_lo) / (hi - lo)) + ref_lo


def preblur(
    img: np.ndarray,
    sigma_arcmin: float,
    display: DisplayModel,
    mask=None,
    stretch: bool = True,
) -> np.ndarray:
    """Calibrated pre-blur: Gaussian filter plus full dynamic-range recovery.

    The contrast stretch restores the pre-blur min/max computed inside
    ``mask`` (the ring annulus during stimulus synthesis; the whole image if
    omitted). ``stretch=False`` gives the raw filter output, which is what
    foveation pyramids use.
    """
    if sigma_arcmin == 0:
        return img.copy()
    blurred = gaussian_blur(img, sigma_arcmin, display)
    if not stretch:
        return blurred
    return contrast_stretch(blurred, img, mask)


@dataclass(frozen=True)
class DepthMap:
    """Normalized sinusoidal depth field over canvas coordinates."""

    values: np.ndarray
    orientation: str
    cycles: int
    phase_index: int

    @property
    def map_id(self) -> str:
        return f"{self.orientation}-w{self.cycles}-phase{self.phase_index}"


def make_depth_map(
    spec: RingSpec, display: DisplayModel, shape=None, phase_index: int | None = None
) -> DepthMap:
    """Sinusoid in [0, 1]: radial around the ring for peripheral eccentricities,
    horizontal stripes at the fovea. Phase advances by 0.4*pi per phase index
    (five maps per eccentricity before wrapping around).

    The sampled field is renormalized to span [0, 1] exactly. ``phase_index``
    overrides the spec's value; unlike the spec field it is not range-checked.
    """
    if shape is None:
        size = canvas_size_px(spec, display)
        shape = (size, size)
    h, w = shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    if phase_index is None:
        phase_index = spec.phase_index
    phase = phase_index * PHASE_STEP
    if spec.orientation == "radial":
        ys, xs = np.mgrid[0:h, 0:w]
        phi = np.arctan2(ys - cy, xs - cx)
        raw = 0.5 + 0.5 * np.cos(spec.corrugation_cycles * phi + phase)
    else:
        y_deg = (np.arange(h) - cy) / display.ppd
        row = 0.5 + 0.5 * np.cos(2 * math.pi * spec.corrugation_cpd * y_deg + phase)
        raw = np.tile(row[:, None], (1, w))
    lo, hi = raw.min(), raw.max()
    values = (raw - lo) / (hi - lo)
    return DepthMap(
        values=values,
        orientation=spec.orientation,
        cycles=spec.corrugation_cycles,
        phase_index=phase_index,
    )


@dataclass(frozen=True)
class StereoStimulus:
    left: np.ndarray
    right: np.ndarray
    spec: RingSpec | None
    requested_disparity: float
    depth_map_id: str
    depth: DepthMap | None = None


def apply_disparity(
    left: np.ndarray,
    depth: DepthMap,
    disparity_arcmin: float,
    display: DisplayModel,
    spec: RingSpec | None = None,
    interp: str = "bilinear",
) -> StereoStimulus:
    """Resample the left image into the right eye's view.

    right(x, y) = left(x + s * depth(x, y), y) with s the disparity converted
    to pixels, so troughs stay put and peaks carry the full disparity.
    """
    s_px = float(arcmin_to_px(display, disparity_arcmin))
    h, w = left.shape
    if abs(s_px) >= w:
        raise ValueError(f"shift of {s_px:.1f} px exceeds image width {w}")
    if s_px == 0.0:
        right = left.copy()
    else:
        ys, xs = np.mgrid[0:h, 0:w].astype(float)
        coords = np.stack([ys, xs + s_px * depth.values])
        order = {"bilinear": 1, "nearest": 0}[interp]
        right = ndimage.map_coordinates(left, coords, order=order, mode="mirror")
    return StereoStimulus(
        left=left,
        right=right,
        spec=spec,
        requested_disparity=float(disparity_arcmin),
        depth_map_id=depth.map_id,
        depth=depth,
    )


def _extrema_angles(spec: RingSpec, which: str) -> np.ndarray:
    """Angles (rad) where the radial corrugation is at +1 (peaks) or 0 (troughs)."""
    phase = spec.phase_index * PHASE_STEP
    w = spec.corrugation_cycles
    offset = 0.0 if which == "peaks" else math.pi
    return (2 * math.pi * np.arange(w) + offset - phase) / w


def _extrema_rows(spec: RingSpec, display: DisplayModel, h: int, which: str) -> np.ndarray:
    """Canvas rows where the horizontal corrugation is at its extrema."""
    cy = (h - 1) / 2.0
    phase = spec.phase_index * PHASE_STEP
    period_deg = 1.0 / spec.corrugation_cpd
    offset = 0.0 if which == "peaks" else math.pi
    # cos(2 pi f y + phase) = +-1  ->  y = (2 pi n + offset - phase) / (2 pi f)
    half_deg = cy / display.ppd
    n_lo = math.floor((-half_deg * 2 * math.pi / period_deg + phase - offset) / (2 * math.pi))
    ys = []
    for n in range(n_lo - 1, n_lo + 20):
        y_deg = (2 * math.pi * n + offset - phase) * period_deg / (2 * math.pi)
        if -half_deg <= y_deg <= half_deg:
            ys.append(cy + y_deg * display.ppd)
    return np.array(ys)


def render_highlights(stim: StereoStimulus, display: DisplayModel) -> StereoStimulus:
    """Draw zero-disparity tick marks at the corrugation extrema named by the
    spec's highlight target, identically in both eyes, outside the ring edge."""
    if stim.spec is None:
        raise ValueError("stimulus has no ring spec to highlight")
    spec = stim.spec
    left = stim.left.copy()
    right = stim.right.copy()
    h, w = left.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    gap_px = HIGHLIGHT_GAP_DEG * display.ppd
    len_px = HIGHLIGHT_LEN_DEG * display.ppd
    thick_px = max(1.0, HIGHLIGHT_THICK_DEG * display.ppd)
    r0 = spec.outer_deg * display.ppd + gap_px

    def draw_segment(img, x0, y0, x1, y1):
        n = max(2, int(math.hypot(x1 - x0, y1 - y0) * 2))
        xs = np.linspace(x0, x1, n)
        ys = np.linspace(y0, y1, n)
        half = thick_px / 2.0
        for x, y in zip(xs, ys):
            xa, xb = int(math.floor(x - half)), int(math.ceil(x + half))
            ya, yb = int(math.floor(y - half)), int(math.ceil(y + half))
            img[max(0, ya):min(h, yb + 1), max(0, xa):min(w, xb + 1)] = 0.0

    if spec.orientation == "radial":
        for phi in _extrema_angles(spec, spec.highlight_target):
            ux, uy = math.cos(phi), math.sin(phi)
            for img in (left, right):
                draw_segment(
                    img,
                    cx + r0 * ux, cy + r0 * uy,
                    cx + (r0 + len_px) * ux, cy + (r0 + len_px) * uy,
                )
    else:
        for y in _extrema_rows(spec, display, h, spec.highlight_target):
            for img in (left, right):
                draw_segment(img, cx - r0 - len_px, y, cx - r0, y)
                draw_segment(img, cx + r0, y, cx + r0 + len_px, y)
    return dc_replace(stim, left=left, right=right)


def render_stimulus(
    spec: RingSpec,
    disparity_arcmin: float,
    display: DisplayModel,
    highlights: bool = True,
) -> StereoStimulus:
    """Full synthesis pipeline: dots, calibrated blur, warp, highlights."""
    texture = render_dot_texture(spec, display)
    mask = ring_annulus_mask(spec, display, texture.shape)
    blurred = preblur(texture, spec.sigma_arcmin, display, mask=mask)
    depth = make_depth_map(spec, display, texture.shape)
    stim = apply_disparity(blurred, depth, disparity_arcmin, display, spec=spec)
    if highlights:
        stim = render_highlights(stim, display)
    return stim


def vergence_angle_arcmin(ipd_mm: float, depth_m) -> np.ndarray | float:
    """Vergence angle 2*atan(ipd / (2 z)) in arcminutes."""
    z = np.asarray(depth_m, dtype=float)
    out = np.degrees(2.0 * np.arctan((ipd_mm / 1000.0) / (2.0 * z))) * 60.0
    return float(out) if out.ndim == 0 else out


def make_validation_scene(
    ipd_mm: float,
    side_with_disparity: str,
    scene_seed: int,
    display: DisplayModel,
    depth_range_m: tuple[float, float] = (1.0, 5.0),
) -> StereoStimulus:
    """Half-split procedural scene: one half flat (zero disparity), the other
    warped by the vergence angles of a smooth random depth field rendered at
    the requested inter-pupillary distance. The central disk is blacked out.
    """
    if not 0 <= ipd_mm <= 20:
        raise ValueError("ipd_mm must be in [0, 20]")
    if side_with_disparity not in ("left", "right"):
        raise ValueError("side_with_disparity must be 'left' or 'right'")
    h, w = display.height_px, display.width_px
    rng = np.random.default_rng(np.random.SeedSequence([int(scene_seed)]))
    texture = ndimage.gaussian_filter(rng.random((h, w)), 1.5, mode="wrap")
    t_lo, t_hi = texture.min(), texture.max()
    texture = 0.05 + 0.95 * (texture - t_lo) / (t_hi - t_lo)

    z_lo, z_hi = depth_range_m
    depth_field = ndimage.gaussian_filter(rng.random((h, w)), 8.0, mode="wrap")
    d_lo, d_hi = depth_field.min(), depth_field.max()
    depth_m = z_lo + (z_hi - z_lo) * (depth_field - d_lo) / (d_hi - d_lo)

    shift_px = arcmin_to_px(display, vergence_angle_arcmin(ipd_mm, depth_m))
    xs = np.tile(np.arange(w, dtype=float), (h, 1))
    half = xs < (w / 2.0) if side_with_disparity == "left" else xs >= (w / 2.0)
    shift_px = np.where(half, shift_px, 0.0)

    left = texture
    if ipd_mm == 0:
        right = left.copy()
    else:
        ys = np.tile(np.arange(h, dtype=float)[:, None], (1, w))
        right = ndimage.map_coordinates(left, np.stack([ys, xs + shift_px]), order=1, mode="mirror")

    r_deg = _radius_map_deg((h, w), display)
    blackout = r_deg < VALIDATION_BLACKOUT_DEG
    left = left.copy()
    left[blackout] = 0.0
    right[blackout] = 0.0
    return StereoStimulus(
        left=left,
        right=right,
        spec=None,
        requested_disparity=float(vergence_angle_arcmin(ipd_mm, z_lo)),
        depth_map_id=f"scene{scene_seed}-{side_with_disparity}-ipd{ipd_mm:g}mm",
        depth=None,
    )


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float64) / 255.0


def save_stimulus(stim: StereoStimulus, basepath, display: DisplayModel | None = None) -> dict:
    """Write left / right / side-by-side PNGs plus the JSON sidecar.

    Returns the sidecar dict; files land at <basepath>_{left,right,sbs}.png
    and <basepath>.json.
    """
    from PIL import Image

    base = str(basepath)
    paths = {}
    for name, img in (("left", stim.left), ("right", stim.right)):
        p = f"{base}_{name}.png"
        Image.fromarray(to_uint8(img), mode="L").save(p)
        paths[name] = p
    sbs = np.concatenate([to_uint8(stim.left), to_uint8(stim.right)], axis=1)
    paths["sbs"] = f"{base}_sbs.png"
    Image.fromarray(sbs, mode="L").save(paths["sbs"])
    sidecar = {
        "spec": stim.spec.to_json_dict() if stim.spec is not None else None,
        "requested_disparity": stim.requested_disparity,
        "seed": stim.spec.seed if stim.spec is not None else None,
        "depth_map_id": stim.depth_map_id,
        "files": paths,
    }
    if display is not None:
        sidecar["display"] = display.to_json_dict()
    with open(f"{base}.json", "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")
    return sidecar
