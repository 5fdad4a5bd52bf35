"""Operator-facing command line.

Subcommands: simulate, process, replay, thumb, compare. Every flag has an
environment-variable override named WHED_<FLAG> (dashes become
underscores, upper case), e.g. WHED_SESSION, WHED_SEED, WHED_OUT.

Exit codes: 0 success, 2 usage error, 3 data/schema error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import acquire, csvio, postproc, replay, simdev, thumbkin
from .core import DataError, NumericalError, Quaternion, RigidTransform

DEFAULT_SEED = 1234

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _env_default(flag: str, fallback=None):
    return os.environ.get("WHED_" + flag.upper().replace("-", "_"), fallback)


def _add_flag(parser, flag: str, **kwargs):
    env = _env_default(flag)
    if env is not None:
        kwargs["default"] = env
        kwargs.pop("required", None)
    parser.add_argument("--" + flag, **kwargs)


def _parse_pose7(text: str, what: str) -> RigidTransform:
    parts = text.replace(",", " ").split()
    if len(parts) != 7:
        raise DataError(f"{what} must be 7 numbers 'px py pz qw qx qy qz', got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise DataError(f"{what} has a non-numeric field: {text!r}") from None
    return RigidTransform(Quaternion(*vals[3:]), np.array(vals[:3]))


def _load_scenario(args) -> simdev.SimScenario:
    if args.scenario:
        scenario = simdev.load_scenario(args.scenario)
    else:
        scenario = simdev.SimScenario()
    if args.seed is not None:
        scenario.seed = args.seed
    return scenario


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args)
    out = Path(args.out)
    buffers = acquire.collect_session(scenario)
    acquire.persist_session(buffers, out)
    open_raw, closed_raw, gain = simdev.scenario_calibration(scenario)
    csvio.write_calibration(out / "calibration.csv", open_raw, closed_raw, gain)
    print(f"session written to {out}")
    print(
        f"  encoders: {len(buffers.encoders)} rows, poses: {len(buffers.poses)} rows, "
        f"video: {len(buffers.video)} rows"
    )
    return EXIT_OK


def cmd_process(args) -> int:
    session = Path(args.session)
    out = Path(args.out) if args.out else session
    buffers = acquire.load_session(session)
    result = postproc.process_session(buffers, out, filtering=not args.no_filter)
    if len(result.sync) == 0:
        print("warning: no synchronized records", file=sys.stderr)
    print(f"processed {len(result.sync)} master-clock rows into {out}")
    print(result.sync.report_text(), end="")
    return EXIT_OK


def cmd_replay(args) -> int:
    session = Path(args.session)
    out = Path(args.out) if args.out else session
    cal_path = Path(args.calibration) if args.calibration else session / "calibration.csv"
    if not cal_path.exists():
        raise DataError(f"missing calibration file {cal_path}")
    cals = replay.load_calibration(cal_path)
    filtered = session / "filtered.csv"
    if not filtered.exists():
        raise DataError(f"missing {filtered}; run `whed process` first")
    t_ns, _, channels, pose_rows = csvio.read_synced(filtered)

    p_base = _parse_pose7(args.base_pose, "--base-pose") if args.base_pose else None
    eef = _parse_pose7(args.eef_offset, "--eef-offset") if args.eef_offset else None

    plan = replay.build_replay_plan(t_ns, channels, pose_rows, cals, eef, p_base)
    out.mkdir(parents=True, exist_ok=True)
    csvio.write_plan(out / "plan.csv", plan.t_ns, plan.commands, plan.target_poses)
    log = replay.run_plan(plan)
    csvio.write_plan(out / "replay_log.csv", log.t_ns, log.commands, log.poses)

    # Fidelity against the filtered demonstration, expressed in the same frame.
    eef_t = eef if eef is not None else RigidTransform.identity()
    demo_rows = postproc.retarget_rows(pose_rows, eef_t, RigidTransform.identity())
    report, terr, pos_err, ang_err = replay.compare_trajectories(
        t_ns, demo_rows, log.t_ns, log.poses, commands=(plan.commands, log.commands)
    )
    replay.write_fidelity(out, report, terr, pos_err, ang_err)
    print(f"replay plan and fidelity report written to {out}")
    print(report.text(), end="")
    return EXIT_OK


def cmd_thumb(args) -> int:
    model = thumbkin.load_geometry(args.geometry) if args.geometry else thumbkin.ThumbCouplingModel()
    qp = (
        tuple(float(v) for v in args.qp.replace(",", " ").split())
        if args.qp
        else (0.5, 0.2)
    )
    if len(qp) != 2:
        raise DataError("--qp must be 'theta2,theta4'")
    q = thumbkin.PassiveThumbState(*qp)

    if args.thumb_action == "residual":
        exo = (
            thumbkin.ExoPose(_parse_pose7(args.pose, "--pose"))
            if args.pose
            else thumbkin.ExoPose(RigidTransform.identity())
        )
        res_d, res_m = thumbkin.constraint_residual(exo, q, model)
        print(f"res_d={res_d:.9g} res_m={res_m:.9g}")
        return EXIT_OK

    if args.thumb_action == "solve":
        if args.pose:
            exo = thumbkin.ExoPose(_parse_pose7(args.pose, "--pose"))
        else:
            rng = np.random.default_rng(args.seed if args.seed is not None else DEFAULT_SEED)
            exo = thumbkin.ExoPose(thumbkin.forward_construct_exo_pose(q, model, rng))
            print(f"constructed exo pose for qp=({q.theta2}, {q.theta4})")
        init = model.clamp(0.5 * (model.theta2_min + model.theta2_max),
                           0.5 * (model.theta4_min + model.theta4_max))
        result = thumbkin.solve_passive_thumb(exo, model, init)
        print(
            f"theta2={result.state.theta2:.9g} theta4={result.state.theta4:.9g} "
            f"res_d={result.residual[0]:.3e} res_m={result.residual[1]:.3e} "
            f"iterations={result.iterations}"
        )
        return EXIT_OK

    # wobble
    n = args.n
    tol = args.tol
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    poses, residuals = thumbkin.sample_wobble_space(q, model, n, tol=tol, seed=seed)
    rows = np.stack([p.as_pose7() for p in poses])
    out = Path(args.out) if args.out else Path("wobble.csv")
    if out.is_dir():
        out = out / "wobble.csv"
    csvio.write_wobble(out, rows, residuals[:, 0], residuals[:, 1])
    print(f"{n} wobble samples written to {out} (max |res| = {np.abs(residuals).max():.3e})")
    return EXIT_OK


def cmd_compare(args) -> int:
    demo_t, _, _, demo_rows = csvio.read_synced(args.demo)
    rep_t, rep_cmd, rep_rows = csvio.read_plan(args.replay)
    report, terr, pos_err, ang_err = replay.compare_trajectories(
        demo_t, demo_rows, rep_t, rep_rows
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        replay.write_fidelity(out, report, terr, pos_err, ang_err)
        print(f"fidelity report written to {out}")
    print(report.text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="whed",
        description="Demonstration-capture pipeline tools (simulated hardware).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run the simulated sources and record a session")
    _add_flag(p_sim, "scenario", help="scenario key=value file")
    _add_flag(p_sim, "seed", type=int, help=f"simulation seed (default {DEFAULT_SEED})")
    _add_flag(p_sim, "out", default="session", help="session output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_proc = sub.add_parser("process", help="synchronize and filter a recorded session")
    _add_flag(p_proc, "session", required=True, help="session directory")
    _add_flag(p_proc, "out", help="output directory (default: session)")
    p_proc.add_argument("--no-filter", action="store_true", help="skip the filter chain")
    p_proc.set_defaults(func=cmd_process)

    p_rep = sub.add_parser("replay", help="build a replay plan and run the ideal sink")
    _add_flag(p_rep, "session", required=True, help="processed session directory")
    _add_flag(p_rep, "calibration", help="calibration CSV (default: session/calibration.csv)")
    _add_flag(p_rep, "base-pose", help="robot base pose 'px py pz qw qx qy qz'")
    _add_flag(p_rep, "eef-offset", help="phone-to-EEF mount offset 'px py pz qw qx qy qz'")
    _add_flag(p_rep, "out", help="output directory (default: session)")
    p_rep.set_defaults(func=cmd_replay)

    p_thumb = sub.add_parser("thumb", help="thumb-coupling tools")
    p_thumb.add_argument("thumb_action", choices=["solve", "wobble", "residual"])
    _add_flag(p_thumb, "geometry", help="geometry key=value file")
    _add_flag(p_thumb, "qp", help="passive thumb state 'theta2,theta4'")
    _add_flag(p_thumb, "pose", help="exo pose 'px py pz qw qx qy qz'")
    _add_flag(p_thumb, "n", type=int, default=500, help="wobble sample count")
    _add_flag(p_thumb, "tol", type=float, default=1e-9, help="wobble residual tolerance (m)")
    _add_flag(p_thumb, "seed", type=int, help="sampler seed")
    _add_flag(p_thumb, "out", help="wobble CSV path")
    p_thumb.set_defaults(func=cmd_thumb)

    p_cmp = sub.add_parser("compare", help="fidelity metrics between two trajectory files")
    _add_flag(p_cmp, "demo", required=True, help="synced/filtered CSV of the demonstration")
    _add_flag(p_cmp, "replay", required=True, help="replay log / plan CSV")
    _add_flag(p_cmp, "out", help="directory for fidelity_report.txt and errors.csv")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
