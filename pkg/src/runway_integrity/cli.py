"""Command-line interface: ``runway-integrity <command> ...``.

Exit codes: 0 success (every frame accepted / converged), 1 input or usage
error, 2 at least one frame rejected (``check``) or not converged (``pnp``).
Angles on the command line and in files are degrees; lengths are meters;
pixel quantities are pixels.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import PoseIntegrityError
from .fileformats import (
    Frame,
    PredictionFile,
    dumps,
    format_float,
    load_heatmaps,
    load_prediction_file,
    pose_to_dict,
    write_prediction_file,
)
from .geometry import CameraIntrinsics, project_points, rotation_angle, runway_corners
from .pnp import PnpProblem, SolverOptions, initial_pose_from_prior, solve_weighted_pnp
from .raim import IntegrityConfig, check_rejection
from .sim import FAULT_KINDS, FaultSpec, ScenarioConfig, run_monte_carlo
from .softargmax import scale_to_pixels, soft_argmax
from .uncertainty import DEFAULT_LEVELS, calibration_curve, recalibrate, sharpness_histogram

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAGGED = 2

TRIAL_COLUMNS = ("seed", "stat", "p_value", "decision", "pos_err_m", "rot_err_rad")

DEFAULT_INIT = {"glide_deg": 3.0, "distance_m": 2000.0, "lateral_offset_m": 0.0}


class UsageError(PoseIntegrityError):
    """Bad command-line values that argparse cannot catch on its own."""


def _emit(obj, out) -> None:
    out.write(dumps(obj) + "\n")


def _num(x: float):
    # NaN/inf are not JSON; callers see null
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------- init pose


def _add_init_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--init-glide", type=float, help="prior glide angle, degrees")
    p.add_argument("--init-distance", type=float, help="prior slant range to the near threshold, m")
    p.add_argument("--init-offset", type=float, help="prior lateral offset (left positive), m")


def _init_pose(args, pf: PredictionFile):
    """Flags override the file's ``init`` block, which overrides the defaults."""
    init = dict(DEFAULT_INIT)
    if pf.init:
        for key in init:
            if key in pf.init:
                try:
                    init[key] = float(pf.init[key])
                except (TypeError, ValueError) as exc:
                    raise UsageError(f"init.{key} must be a number") from exc
    for key, flag in (("glide_deg", "init_glide"), ("distance_m", "init_distance"),
                      ("lateral_offset_m", "init_offset")):
        if getattr(args, flag) is not None:
            init[key] = getattr(args, flag)
    return initial_pose_from_prior(init["glide_deg"], init["distance_m"], init["lateral_offset_m"])


def _map_frames(fn, tasks: list, jobs: int) -> list:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


# ---------------------------------------------------------------- check


def _check_frame(task):
    index, frame, world, camera, init, cfg = task
    res = check_rejection(PnpProblem(world, frame.predictions, camera), init, cfg)
    row = {"frame": index}
    if frame.frame_id is not None:
        row["id"] = frame.frame_id
    row.update(
        {
            "decision": res.decision.value,
            "stat": res.stat,
            "dof": res.dof,
            "p_value": res.p_value,
            "density": _num(res.density),
            "rank": res.rank,
            "converged": res.pose.converged,
            "condition_flag": res.condition_flag,
            "solver_failed": res.solver_failed,
            "iterations": res.pose.iterations,
            "pose": pose_to_dict(res.pose.pose),
        }
    )
    return row


def cmd_check(args, out) -> int:
    pf = load_prediction_file(args.input)
    cfg = IntegrityConfig(alpha=args.alpha, mode=args.mode, tau=args.tau, whitening=args.whitening)
    init = _init_pose(args, pf)
    tasks = [(i, f, pf.world_points, pf.camera, init, cfg) for i, f in enumerate(pf.frames)]
    rows = _map_frames(_check_frame, tasks, args.jobs)
    for row in rows:
        _emit(row, out)
    return EXIT_FLAGGED if any(r["decision"] == "REJECT" for r in rows) else EXIT_OK


# ---------------------------------------------------------------- pnp


def _pnp_frame(task):
    index, frame, world, camera, init = task
    sol = solve_weighted_pnp(PnpProblem(world, frame.predictions, camera), init, SolverOptions())
    row = {"frame": index}
    if frame.frame_id is not None:
        row["id"] = frame.frame_id
    row.update(
        {
            "converged": sol.converged,
            "condition_flag": sol.condition_flag,
            "cost": sol.cost,
            "iterations": sol.iterations,
            "gradient_norm": sol.gradient_norm,
            "condition_number": _num(sol.condition_number),
            "message": sol.message,
            "pose": pose_to_dict(sol.pose),
        }
    )
    if frame.true_pose is not None:
        row["pos_err_m"] = float(np.linalg.norm(sol.pose.position - frame.true_pose.position))
        row["rot_err_rad"] = rotation_angle(sol.pose.rotation, frame.true_pose.rotation)
    return row


def cmd_pnp(args, out) -> int:
    pf = load_prediction_file(args.input)
    init = _init_pose(args, pf)
    tasks = [(i, f, pf.world_points, pf.camera, init) for i, f in enumerate(pf.frames)]
    rows = _map_frames(_pnp_frame, tasks, args.jobs)
    for row in rows:
        _emit(row, out)
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_FLAGGED


# ---------------------------------------------------------------- simulate


def parse_fault(text: str) -> FaultSpec:
    """``kind:magnitude[:i,j,...]``, e.g. ``far_threshold_shift:184``."""
    parts = text.split(":")
    if len(parts) not in (2, 3) or parts[0] not in FAULT_KINDS:
        raise argparse.ArgumentTypeError(
            f"fault must be KIND:MAGNITUDE[:I,J,...] with KIND in {', '.join(FAULT_KINDS)}"
        )
    try:
        magnitude = float(parts[1])
        affected = tuple(int(i) for i in parts[2].split(",")) if len(parts) == 3 else None
        return FaultSpec(parts[0], magnitude, affected)
    except (ValueError, PoseIntegrityError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _scenario_from_args(args) -> ScenarioConfig:
    cx = args.cx if args.cx is not None else args.width / 2.0
    cy = args.cy if args.cy is not None else args.height / 2.0
    camera = CameraIntrinsics(args.fx, args.fy if args.fy is not None else args.fx, cx, cy,
                              args.width, args.height)
    return ScenarioConfig(
        runway_length=args.runway_length,
        runway_width=args.runway_width,
        glide_deg=args.glide,
        distance=args.distance,
        lateral_offset=args.lateral_offset,
        camera=camera,
        sigma_px=args.sigma,
        seed=args.seed,
    )


def trials_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for r in sorted(records, key=lambda r: r.index):
        if r.ok:
            w.writerow([r.seed, format_float(r.result.stat), format_float(r.result.p_value),
                        r.result.decision.value, format_float(r.pos_err_m),
                        format_float(r.rot_err_rad)])
        else:
            w.writerow([r.seed, "", "", "INFEASIBLE", "", ""])
    return buf.getvalue()


def cmd_simulate(args, out) -> int:
    cfg = _scenario_from_args(args)
    integrity = IntegrityConfig(alpha=args.alpha, mode=args.mode, tau=args.tau)
    mc = run_monte_carlo(cfg, args.trials, args.fault, integrity, jobs=args.jobs)
    summary = dict(mc.summary)
    summary["fault"] = args.fault.describe() if args.fault else None
    summary["seed"] = args.seed
    summary["mode"] = args.mode
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "trials.csv").write_text(trials_csv(mc.records), encoding="utf-8")
        (outdir / "summary.json").write_text(dumps(summary) + "\n", encoding="utf-8")
    if args.emit_predictions:
        frames = [
            Frame(
                predictions=r.predictions,
                truth=project_points(np.asarray(_world(cfg)), r.true_pose, cfg.camera),
                true_pose=r.true_pose,
                frame_id=f"trial-{r.index}",
            )
            for r in sorted(mc.records, key=lambda r: r.index)
            if r.ok
        ]
        pf = PredictionFile(
            camera=cfg.camera,
            world_points=_world(cfg),
            frames=frames,
            init={"glide_deg": cfg.glide_deg, "distance_m": cfg.distance,
                  "lateral_offset_m": cfg.lateral_offset},
        )
        write_prediction_file(pf, args.emit_predictions)
    _emit(summary, out)
    return EXIT_OK


def _world(cfg: ScenarioConfig) -> np.ndarray:
    return runway_corners(cfg.runway_length, cfg.runway_width)


# ---------------------------------------------------------------- calibrate


def _parse_levels(text: Optional[str]):
    if text is None:
        return DEFAULT_LEVELS
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise UsageError("--levels must be a comma-separated list of numbers") from exc


def cmd_calibrate(args, out) -> int:
    pf = load_prediction_file(args.input)
    if not pf.frames:
        raise UsageError("prediction file has no frames")
    missing = [i for i, f in enumerate(pf.frames) if f.truth is None]
    if missing:
        raise UsageError(f"frames without truth_px: {missing[:10]}")
    preds = [f.predictions for f in pf.frames]
    if args.recalibrate_factor is not None:
        preds = [recalibrate(p, args.recalibrate_factor) for p in preds]
    curve = calibration_curve(preds, [f.truth for f in pf.frames], _parse_levels(args.levels))
    sigmas = np.concatenate([p.sigma.ravel() for p in preds])
    edges = np.linspace(0.0, float(sigmas.max()) * (1 + 1e-12), args.bins + 1)
    sharp = sharpness_histogram(preds, edges)
    report = {
        "n_frames": len(pf.frames),
        "n_coordinates": curve.n_coordinates,
        "recalibrate_factor": args.recalibrate_factor if args.recalibrate_factor else 1.0,
        "max_deviation": curve.max_deviation(),
        "curve": [{"rho": r, "coverage": c} for r, c in curve.rows()],
        "sharpness": {"mean": sharp.mean, "median": sharp.median, "n_values": sharp.n_values},
    }
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        lines = ["rho,coverage"] + [f"{format_float(r)},{format_float(c)}" for r, c in curve.rows()]
        (outdir / "calibration.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        hist = ["bin_lo,bin_hi,count"] + [
            f"{format_float(lo)},{format_float(hi)},{int(n)}"
            for lo, hi, n in zip(sharp.bin_edges[:-1], sharp.bin_edges[1:], sharp.counts)
        ]
        (outdir / "sharpness.csv").write_text("\n".join(hist) + "\n", encoding="utf-8")
    _emit(report, out)
    return EXIT_OK


# ---------------------------------------------------------------- softargmax


def cmd_softargmax(args, out) -> int:
    maps, crop = load_heatmaps(args.input)
    if args.crop_size is not None:
        crop = tuple(args.crop_size)
    rows = []
    for i, h in enumerate(maps):
        k = soft_argmax(h)
        cw, ch = crop if crop is not None else (h.shape[1], h.shape[0])
        px = scale_to_pixels(k, cw, ch)
        rows.append({"index": i, "x_norm": k.x, "y_norm": k.y, "u_px": px.u, "v_px": px.v})
    _emit({"crop_size": list(crop) if crop is not None else None, "keypoints": rows}, out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_decision_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=1e-3, help="false-alarm rate for cdf_test")
    p.add_argument("--mode", choices=("cdf_test", "paper_literal"), default="cdf_test")
    p.add_argument("--tau", type=float, default=0.5, help="density threshold for paper_literal")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="runway-integrity",
        description="Keypoint uncertainty, weighted pose estimation and residual integrity checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="integrity decision per frame of a prediction file")
    p.add_argument("input", help="prediction file (JSON)")
    _add_decision_flags(p)
    p.add_argument("--whitening", choices=("pre", "post"), default="pre")
    _add_init_flags(p)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("pnp", help="weighted pose per frame of a prediction file")
    p.add_argument("input", help="prediction file (JSON)")
    _add_init_flags(p)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_pnp)

    p = sub.add_parser("simulate", help="Monte Carlo trials on a synthetic approach")
    p.add_argument("--runway-length", type=float, default=3000.0, help="m")
    p.add_argument("--runway-width", type=float, default=45.0, help="m")
    p.add_argument("--glide", type=float, default=3.0, help="degrees")
    p.add_argument("--distance", type=float, default=2000.0, help="slant range, m")
    p.add_argument("--lateral-offset", type=float, default=0.0, help="m, left positive")
    p.add_argument("--sigma", type=float, default=1.0, help="keypoint sigma, px")
    p.add_argument("--fx", type=float, default=1000.0)
    p.add_argument("--fy", type=float, default=None, help="defaults to --fx")
    p.add_argument("--cx", type=float, default=None, help="defaults to width / 2")
    p.add_argument("--cy", type=float, default=None, help="defaults to height / 2")
    p.add_argument("--width", type=int, default=224)
    p.add_argument("--height", type=int, default=224)
    p.add_argument("--fault", type=parse_fault, default=None, help="KIND:MAGNITUDE[:I,J,...]")
    p.add_argument("--trials", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    _add_decision_flags(p)
    p.add_argument("--out", help="directory for trials.csv and summary.json")
    p.add_argument("--emit-predictions", help="write the trials as a prediction file")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="calibration curve and sharpness of predictions with truths")
    p.add_argument("input", help="prediction file with truth_px in every frame")
    p.add_argument("--levels", help="comma-separated probability levels (default 0.05..0.95)")
    p.add_argument("--recalibrate-factor", type=float, default=None, help="scale sigma first")
    p.add_argument("--bins", type=_positive_int, default=20, help="sharpness histogram bins")
    p.add_argument("--out", help="directory for calibration.csv and sharpness.csv")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("softargmax", help="sub-pixel keypoints from heatmaps")
    p.add_argument("input", help="heatmap file (JSON)")
    p.add_argument("--crop-size", type=float, nargs=2, metavar=("W", "H"),
                   help="crop size in pixels used for scaling (default: from file or heatmap)")
    p.set_defaults(func=cmd_softargmax)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for flagged frames
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return args.func(args, out)
    except (PoseIntegrityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
