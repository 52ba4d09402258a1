#!/usr/bin/env python3
"""Render a gallery: one ring stimulus per eccentricity, a blur-budget map,
and a foveated half-split validation scene.

Usage: python scripts/render_stimulus_gallery.py [outdir] [--ppd P]
"""

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from stereoblur.display import DisplayModel
from stereoblur.foveation import budget_from_model, build_pyramid, foveate
from stereoblur.model import blur_budget_map, default_paper_model, save_budget_map
from stereoblur.stimulus import (
    make_ring_spec,
    make_validation_scene,
    render_stimulus,
    save_stimulus,
    to_uint8,
)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir", nargs="?", default="gallery")
    ap.add_argument("--ppd", type=float, default=18.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    display = DisplayModel(width_px=1024, height_px=1024, ppd=args.ppd)
    model = default_paper_model()

    for theta, sigma, disparity in ((0.0, 3.0, 2.0), (10.0, 5.8, 4.0), (20.0, 10.6, 8.0)):
        spec = make_ring_spec(theta, sigma, phase_index=1, seed=args.seed)
        stim = render_stimulus(spec, disparity, display)
        save_stimulus(stim, outdir / f"ring_theta{int(theta):02d}", display)
        print(f"ring at {theta:.0f} deg -> {outdir}/ring_theta{int(theta):02d}_*.png")

    budget_display = DisplayModel(width_px=512, height_px=512, ppd=10.0)
    budget = blur_budget_map(model, budget_display, (255.5, 255.5))
    save_budget_map(budget, outdir / "budget_map.png")
    print(f"blur budget map -> {outdir}/budget_map.png (+sidecar)")

    scene_display = DisplayModel(width_px=512, height_px=512, ppd=12.0)
    scene = make_validation_scene(12.0, "right", scene_seed=args.seed, display=scene_display)
    gaze = ((scene_display.width_px - 1) / 2, (scene_display.height_px - 1) / 2)
    fov = foveate(
        build_pyramid(scene.left, display=scene_display),
        gaze, budget_from_model(model), scene_display,
    )
    Image.fromarray(to_uint8(scene.left), mode="L").save(outdir / "scene_org.png")
    Image.fromarray(to_uint8(fov), mode="L").save(outdir / "scene_fov.png")
    print(f"validation scene (org/fov) -> {outdir}/scene_org.png, {outdir}/scene_fov.png")
    return 0


if __name__ == "__main__":
    sys.exit(main())
