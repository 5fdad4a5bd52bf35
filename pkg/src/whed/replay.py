"""Replay: encoder calibration to motor commands, arm-trajectory
reconstruction from relative actions, plan construction, and
demonstration-vs-replay fidelity metrics.

Hand commands come from per-channel linear interpolation between the
calibrated fully-open and fully-closed raw counts, scaled by a tuned gain
into the 16-bit motor range. Arm targets are rebuilt by accumulating
relative actions (translation plus fixed-axis Euler xyz components) onto a
static base pose, with every rotation component wrapped to [-pi, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import csvio, postproc, simdev
from .core import (
    DataError,
    GimbalLockError,
    Quaternion,
    RigidTransform,
    euler_xyz_from_quat,
    quat_from_euler_xyz,
    wrap_angle,
)

MOTOR_MAX = 65535


@dataclass(frozen=True)
class ChannelCalibration:
    """Fully-open / fully-closed raw counts and the tuned gain for one channel."""

    open_raw: int
    closed_raw: int
    gain: float = 1.0

    def __post_init__(self) -> None:
        if not (0 <= self.open_raw <= 4095 and 0 <= self.closed_raw <= 4095):
            raise DataError("calibration endpoints must lie in [0, 4095]")
        if self.open_raw == self.closed_raw:
            raise DataError("open_raw and closed_raw must differ")
        if not self.gain > 0:
            raise DataError("gain must be positive")


def load_calibration(path) -> list[ChannelCalibration]:
    open_raw, closed_raw, gain = csvio.read_calibration(path)
    return [
        ChannelCalibration(int(open_raw[i]), int(closed_raw[i]), float(gain[i]))
        for i in range(6)
    ]


def save_calibration(path, cals: list[ChannelCalibration]) -> None:
    csvio.write_calibration(
        path,
        [c.open_raw for c in cals],
        [c.closed_raw for c in cals],
        [c.gain for c in cals],
    )


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


def map_to_motor(raw, cal: ChannelCalibration):
    """Raw ADC count(s) to 16-bit motor command(s) in [0, 65535].

    t = (raw - open) / (closed - open); command = clamp(round(gain*t*65535))
    with rounding half away from zero.
    """
    r = np.asarray(raw, dtype=np.float64)
    t = (r - cal.open_raw) / (cal.closed_raw - cal.open_raw)
    cmd = np.clip(_round_half_away(cal.gain * t * MOTOR_MAX), 0, MOTOR_MAX)
    out = cmd.astype(np.uint16)
    return int(out) if np.isscalar(raw) or out.ndim == 0 else out


# ----------------------------------------------------------------- actions


def _pose_vec6(t: RigidTransform, frame: int | None = None) -> np.ndarray:
    """[tx, ty, tz, ex, ey, ez] with fixed-axis Euler xyz rotation components."""
    try:
        ex, ey, ez = euler_xyz_from_quat(t.rotation)
    except GimbalLockError as e:
        where = f" at frame {frame}" if frame is not None else ""
        raise GimbalLockError(f"{e}{where}") from None
    return np.array([*t.translation, ex, ey, ez])


def extract_relative_actions(absolute: list[RigidTransform], p_base: RigidTransform) -> np.ndarray:
    """Per-frame relative offsets: consecutive 6-vector differences, the
    first frame differenced against the base; rotation deltas wrapped."""
    actions = np.empty((len(absolute), 6))
    prev = _pose_vec6(p_base)
    for i, pose in enumerate(absolute):
        cur = _pose_vec6(pose, frame=i)
        d = cur - prev
        d[3:] = [wrap_angle(a) for a in d[3:]]
        actions[i] = d
        prev = cur
    if actions.size and not np.all(np.isfinite(actions)):
        raise DataError("non-finite action component")
    return actions


def reconstruct_arm_trajectory(actions: np.ndarray, p_base: RigidTransform) -> list[RigidTransform]:
    """Absolute targets from the running sum of relative actions on the base.

    The cumulative 6-vector is kept unwrapped; each target's rotation
    components are wrapped to [-pi, pi) before conversion.
    """
    acts = np.asarray(actions, dtype=np.float64)
    if acts.size and (acts.ndim != 2 or acts.shape[1] != 6):
        raise DataError(f"actions must be (n, 6), got {acts.shape}")
    if acts.size and not np.all(np.isfinite(acts)):
        raise DataError("non-finite action component")
    base = _pose_vec6(p_base)
    out = []
    cumulative = np.zeros(6)
    for row in acts:
        cumulative = cumulative + row
        vec = base + cumulative
        angles = [wrap_angle(a) for a in vec[3:]]
        out.append(
            RigidTransform(quat_from_euler_xyz(*angles), vec[:3])
        )
    return out


# -------------------------------------------------------------------- plan


@dataclass
class ReplayPlan:
    """30 Hz command stream: hand motor commands plus absolute arm targets."""

    t_ns: np.ndarray
    commands: np.ndarray
    target_poses: np.ndarray  # (n, 7) rows
    p_base: RigidTransform


def build_replay_plan(
    t_ns: np.ndarray,
    channels: np.ndarray,
    pose_rows: np.ndarray,
    cals: list[ChannelCalibration],
    t_eef_phone: RigidTransform | None = None,
    p_base: RigidTransform | None = None,
    t_base: RigidTransform | None = None,
) -> ReplayPlan:
    """Turn synced+filtered records into a replay plan.

    Pose rows are retargeted through the phone-mount offset and base frame,
    relative actions are extracted against the demonstration start, and
    absolute targets are rebuilt from p_base (default: the demonstration
    start, which replays in place).
    """
    if cals is None or len(cals) != 6:
        raise DataError(f"need calibrations for all 6 channels, got {0 if cals is None else len(cals)}")
    t_ns = np.asarray(t_ns, dtype=np.int64)
    ch = np.asarray(channels, dtype=np.float64)
    rows = np.asarray(pose_rows, dtype=np.float64)
    if len(t_ns) != len(ch) or len(t_ns) != len(rows):
        raise DataError("record lengths disagree")

    commands = np.zeros((len(t_ns), 6), dtype=np.uint16)
    for c in range(6):
        if len(t_ns):
            commands[:, c] = map_to_motor(ch[:, c], cals[c])

    eef = t_eef_phone if t_eef_phone is not None else RigidTransform.identity()
    base_frame = t_base if t_base is not None else RigidTransform.identity()
    demo = [
        postproc.retarget_pose(RigidTransform.from_pose7(r), eef, base_frame)
        for r in rows
    ]
    if not demo:
        base = p_base if p_base is not None else RigidTransform.identity()
        return ReplayPlan(t_ns, commands, np.empty((0, 7)), base)
    start = demo[0]
    base = p_base if p_base is not None else start
    actions = extract_relative_actions(demo, start)
    targets = reconstruct_arm_trajectory(actions, base)
    target_rows = np.stack([t.as_pose7() for t in targets])
    return ReplayPlan(t_ns, commands, target_rows, base)


def run_plan(plan: ReplayPlan) -> simdev.ReplayLog:
    """Stream the plan to the ideal robot sink."""
    return simdev.run_robot_sink(plan.t_ns, plan.commands, plan.target_poses)


# ----------------------------------------------------------------- metrics


@dataclass
class FidelityReport:
    position_rmse_m: float
    position_max_m: float
    orientation_mean_rad: float
    command_rmse: np.ndarray | None
    matched: int

    def text(self) -> str:
        lines = [
            f"matched pairs: {self.matched}",
            f"position RMSE: {self.position_rmse_m * 1000:.6f} mm",
            f"position max error: {self.position_max_m * 1000:.6f} mm",
            f"orientation mean geodesic error: {self.orientation_mean_rad:.9f} rad",
        ]
        if self.command_rmse is not None:
            per = ", ".join(f"{v:.3f}" for v in self.command_rmse)
            lines.append(f"per-channel command RMSE (counts): {per}")
        return "\n".join(lines) + "\n"


def geodesic_angles(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """Rowwise geodesic angle 2*acos(|<qa, qb>|) between unit quaternions."""
    dots = np.abs(np.sum(qa * qb, axis=1))
    return 2.0 * np.arccos(np.clip(dots, -1.0, 1.0))


def compare_trajectories(
    demo_t_ns: np.ndarray,
    demo_rows: np.ndarray,
    replay_t_ns: np.ndarray,
    replay_rows: np.ndarray,
    gate_ns: int = postproc.SYNC_GATE_NS,
    commands: tuple[np.ndarray, np.ndarray] | None = None,
):
    """Fidelity metrics between a demonstration and a replay log.

    Each replay sample is matched to its nearest demonstration sample;
    matches beyond the gate are ignored. Returns (report, t_ns, pos_err,
    ang_err) so the error traces can be written for plotting.
    """
    demo_t = np.asarray(demo_t_ns, dtype=np.int64)
    rep_t = np.asarray(replay_t_ns, dtype=np.int64)
    if len(demo_t) == 0 or len(rep_t) == 0:
        raise DataError("cannot compare empty trajectories")
    idx = postproc._nearest_indices(demo_t, rep_t)
    offs = np.abs(rep_t - demo_t[idx])
    keep = offs <= gate_ns
    if not np.any(keep):
        raise DataError("no demonstration/replay pairs within the time gate")

    d = np.asarray(demo_rows, dtype=np.float64)[idx[keep]]
    r = np.asarray(replay_rows, dtype=np.float64)[keep]
    pos_err = np.linalg.norm(d[:, :3] - r[:, :3], axis=1)
    ang_err = geodesic_angles(d[:, 3:], r[:, 3:])

    cmd_rmse = None
    if commands is not None:
        planned, executed = commands
        if len(planned) == len(executed) and len(planned):
            diff = planned.astype(np.float64) - executed.astype(np.float64)
            cmd_rmse = np.sqrt(np.mean(diff * diff, axis=0))

    report = FidelityReport(
        position_rmse_m=float(np.sqrt(np.mean(pos_err**2))),
        position_max_m=float(pos_err.max()),
        orientation_mean_rad=float(ang_err.mean()),
        command_rmse=cmd_rmse,
        matched=int(keep.sum()),
    )
    return report, rep_t[keep], pos_err, ang_err


def write_fidelity(out_dir, report: FidelityReport, t_ns, pos_err, ang_err) -> None:
    out_dir = Path(out_dir)
    csvio.write_text(out_dir / "fidelity_report.txt", report.text())
    csvio.write_errors(out_dir / "errors.csv", t_ns, pos_err, ang_err)
