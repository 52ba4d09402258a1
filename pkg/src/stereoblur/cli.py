"""Batch command-line entry points.

Subcommands: gen-stimulus, run-sim, fit-surface, eval, budget-map, validate,
serve. Outputs are machine-readable (CSV/JSON/PNG); every randomized command
is deterministic under --seed. Exit codes: 0 success, 2 usage error, 1
runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import model as model_mod
from . import psychofit, simobserver, staircase, surfacefit, validation
from .display import DisplayModel
from .foveation import budget_from_model
from .model import SurfaceModel, default_paper_model, eval_threshold
from .stimulus import condition_grid, make_ring_spec, render_stimulus, save_stimulus


def _display_from_args(args) -> DisplayModel:
    return DisplayModel(width_px=args.width, height_px=args.height, ppd=args.ppd)


def _add_display_args(p, width=512, height=512):
    p.add_argument("--ppd", type=float, default=30.0, help="pixels per degree")
    p.add_argument("--width", type=int, default=width)
    p.add_argument("--height", type=int, default=height)


def _load_model(path: str | None) -> SurfaceModel:
    return default_paper_model() if path is None else SurfaceModel.load(path)


def cmd_gen_stimulus(args) -> int:
    if not args.free_theta and (args.theta, args.sigma) not in condition_grid():
        print(
            f"error: condition (theta={args.theta}, sigma={args.sigma}) is not in "
            "the tested grid; pass --free-theta to render anyway",
            file=sys.stderr,
        )
        return 1
    display = _display_from_args(args)
    if args.free_theta and args.theta not in (0.0, 10.0, 20.0):
        print("error: --free-theta still requires theta in {0, 10, 20}", file=sys.stderr)
        return 1
    spec = make_ring_spec(
        args.theta, args.sigma, phase_index=args.phase_index,
        highlight_target=args.highlight, seed=args.seed,
    )
    stim = render_stimulus(spec, args.disparity, display, highlights=not args.no_highlights)
    sidecar = save_stimulus(stim, args.out, display)
    print(json.dumps({"written": sidecar["files"], "sidecar": f"{args.out}.json"}))
    return 0


def cmd_run_sim(args) -> int:
    truth = _load_model(args.model)
    rng = np.random.default_rng(args.seed)
    estimates, extras = [], {"participant": []}
    n_outliers = n_unstable = 0
    for theta, sigma in condition_grid():
        for obs_idx in range(args.observers):
            session_seed = int(rng.integers(0, 2**31))
            observer = simobserver.observer_from_model(
                truth, theta, sigma, slope=args.slope, lapse_rate=args.lapse,
                seed=session_seed,
            )
            try:
                _, est = simobserver.run_simulated_session(
                    observer,
                    condition=(theta, sigma),
                    pest_config={"max_trials": args.trials},
                    session_seed=session_seed,
                    n_boot=args.n_boot,
                )
            except psychofit.FitError:
                n_unstable += 1
                continue
            estimates.append(est)
            extras["participant"].append(f"sim{obs_idx:02d}")
            n_outliers += est.outlier
    psychofit.write_estimates_csv(args.out, estimates, extra_columns=extras)
    total = len(estimates) + n_unstable
    summary = {
        "sessions": total,
        "rows": len(estimates),
        "unstable_dropped": n_unstable,
        "outliers": n_outliers,
        "outlier_fraction": n_outliers / max(len(estimates), 1),
        "csv": str(args.out),
    }
    print(json.dumps(summary))
    return 0


def cmd_fit_surface(args) -> int:
    estimates = psychofit.read_estimates_csv(args.estimates)
    by_theta: dict[float, list] = {}
    for e in estimates:
        if e.theta is None or e.sigma is None:
            print("error: estimates CSV must carry theta and sigma", file=sys.stderr)
            return 1
        by_theta.setdefault(e.theta, []).append(e)
    missing = [t for t in (0.0, 10.0, 20.0) if t not in by_theta]
    if missing:
        print(f"error: no estimates at eccentricities {missing}", file=sys.stderr)
        return 1
    try:
        parabolas = [surfacefit.fit_parabola(group) for _, group in sorted(by_theta.items())]
        fitted = surfacefit.assemble_surface(parabolas, p1_mode=args.p1_mode)
    except surfacefit.SurfaceFitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    fitted.save(args.out)
    report = surfacefit.fit_report(parabolas, estimates, fitted)
    if args.report:
        Path(args.report).write_text(report)
    else:
        print(report, end="")
    print(json.dumps({"model": str(args.out)}))
    return 0


def cmd_eval(args) -> int:
    m = _load_model(args.model)
    thetas = [args.theta] if args.theta is not None else [0.0, 5.0, 10.0, 15.0, 20.0]
    sigmas = [args.sigma] if args.sigma is not None else [0.0, 3.0, 6.0, 9.0, 12.0, 15.0]
    print("theta_deg,sigma_arcmin,threshold_arcmin")
    for th in thetas:
        for sg in sigmas:
            t = eval_threshold(m, th, sg, mode=args.mode, extrapolate=args.extrapolate)
            print(f"{th:g},{sg:g},{t!r}")
    return 0


def cmd_budget_map(args) -> int:
    m = _load_model(args.model)
    display = _display_from_args(args)
    gaze = (
        args.gaze_x if args.gaze_x is not None else (display.width_px - 1) / 2.0,
        args.gaze_y if args.gaze_y is not None else (display.height_px - 1) / 2.0,
    )
    budget = model_mod.blur_budget_map(m, display, gaze)
    model_mod.save_budget_map(budget, args.out)
    print(json.dumps({"image": str(args.out), "sidecar": f"{args.out}.json"}))
    return 0


def cmd_validate(args) -> int:
    budget_model = _load_model(args.model)
    rng = np.random.default_rng(args.seed)
    estimates = []
    skipped = 0
    for p_idx in range(args.observers):
        participant = f"sim{p_idx:02d}"
        for scene in validation.SCENES:
            # style-insensitive observer: one true IPD threshold per scene
            t_true = float(np.exp(rng.normal(np.log(5.0), 0.2)))
            for style in validation.STYLES:
                seed = int(rng.integers(0, 2**31))
                observer = simobserver.ObserverSpec(
                    true_threshold=t_true, slope=args.slope, seed=seed
                )
                try:
                    _, est = validation.run_validation_session(
                        validation.ValidationCondition(scene=scene, style=style),
                        observer,
                        pest_config={"max_trials": args.trials,
                                     "grid_min": args.ipd_grid_min},
                        seed=seed,
                        participant=participant,
                        budget_model=budget_model,
                        render=args.render,
                        display=_display_from_args(args) if args.render else None,
                        n_boot=args.n_boot,
                    )
                except psychofit.FitError:
                    skipped += 1
                    continue
                estimates.append(est)
    summary = validation.summarize(estimates)
    validation.write_results_csv(args.out, summary)
    report = validation.report_json_dict(summary)
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report, f, indent=2)
            f.write("\n")
    rates = [c["change_rate"] for c in summary["change_rates"]]
    print(
        json.dumps(
            {
                "csv": str(args.out),
                "participants": args.observers,
                "sessions": len(estimates),
                "skipped_unstable": skipped,
                "change_rates": len(rates),
                "mean_change_rate": float(np.mean(rates)) if rates else None,
            }
        )
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.load(args.config)
    if args.port is not None:
        config.port = args.port
    if args.data_dir is not None:
        config.data_dir = Path(args.data_dir)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stereoblur", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-stimulus", help="render one stereo ring stimulus")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--disparity", type=float, required=True)
    p.add_argument("--phase-index", type=int, default=0)
    p.add_argument("--highlight", choices=["peaks", "troughs"], default="peaks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--free-theta", action="store_true",
                   help="allow (theta, sigma) pairs outside the tested grid")
    p.add_argument("--no-highlights", action="store_true")
    p.add_argument("--out", required=True, help="output basename")
    _add_display_args(p)
    p.set_defaults(func=cmd_gen_stimulus)

    p = sub.add_parser("run-sim", help="simulated sessions over the full condition grid")
    p.add_argument("--observers", type=int, default=11)
    p.add_argument("--trials", type=int, default=60)
    p.add_argument("--n-boot", type=int, default=100)
    p.add_argument("--slope", type=float, default=staircase.DEFAULT_SLOPE)
    p.add_argument("--lapse", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", default=None, help="ground-truth model JSON (default: published)")
    p.add_argument("--out", required=True, help="estimates CSV path")
    p.set_defaults(func=cmd_run_sim)

    p = sub.add_parser("fit-surface", help="fit a surface model from an estimates CSV")
    p.add_argument("--estimates", required=True)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--report", default=None, help="fit report text path")
    p.add_argument("--p1-mode", choices=["fit", "constant"], default="fit")
    p.set_defaults(func=cmd_fit_surface)

    p = sub.add_parser("eval", help="print threshold values from a surface model")
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--mode", choices=["printed-p1", "constant-p1"], default="printed-p1")
    p.add_argument("--extrapolate", action="store_true")
    p.add_argument("--model", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("budget-map", help="write the per-pixel blur budget image")
    p.add_argument("--model", default=None)
    p.add_argument("--gaze-x", type=float, default=None)
    p.add_argument("--gaze-y", type=float, default=None)
    p.add_argument("--out", required=True, help="16-bit PNG path")
    _add_display_args(p)
    p.set_defaults(func=cmd_budget_map)

    p = sub.add_parser("validate", help="run the half-split validation harness")
    p.add_argument("--observers", type=int, default=15)
    p.add_argument("--trials", type=int, default=60)
    p.add_argument("--n-boot", type=int, default=100)
    p.add_argument("--slope", type=float, default=3.0,
                   help="simulated observers' psychometric slope")
    p.add_argument("--ipd-grid-min", type=float, default=1.0,
                   help="lowest staircase IPD in mm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", default=None, help="blur-budget model JSON")
    p.add_argument("--render", action="store_true",
                   help="synthesize scene images every trial (slow)")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--report", default=None, help="JSON report path")
    _add_display_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="start the HTTP session service")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--data-dir", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
