"""Deterministic, seedable stand-ins for the hardware: the 1 kHz encoder
MCU, the ~100 Hz network pose streamer, the 30 Hz camera clock, and an
ideal robot sink for replay. Same scenario + seed always yields bit-identical
outputs, so every downstream stage can be tested against ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import wire
from .core import DataError, Series

ENCODER_RATE_HZ = 1000.0
POSE_RATE_HZ = 100.0
CAMERA_RATE_HZ = 30.0

# SeedSequence spawn slots, one independent stream per device.
_ENCODER_CHILD = 0
_POSE_CHILD = 1
_CAMERA_CHILD = 2


@dataclass
class SimScenario:
    """Simulation configuration; every key can be set in a scenario file."""

    duration_s: float = 10.0
    seed: int = 1234
    trajectory: str = "sinusoid"
    joint_center_rad: float = 0.8
    joint_amplitude_rad: float = 0.5
    joint_frequency_hz: float = 0.4
    palm_translation_m: float = 0.12
    palm_rotation_rad: float = 0.35
    palm_frequency_hz: float = 0.25
    adc_noise_std: float = 2.0
    spike_prob: float = 1e-4
    spike_magnitude: int = 4095
    jitter_ms_low: float = 0.0
    jitter_ms_high: float = 0.0
    encoder_skew_ppm: float = 0.0
    pose_skew_ppm: float = 0.0
    camera_skew_ppm: float = 0.0
    count_offset: float = 2048.0
    count_scale: float = 650.0
    open_angle_rad: float = 0.0
    closed_angle_rad: float = 1.6

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise DataError("duration_s must be > 0")
        if self.adc_noise_std < 0 or self.spike_prob < 0 or self.spike_magnitude < 0:
            raise DataError("noise parameters must be non-negative")
        if self.jitter_ms_high < self.jitter_ms_low:
            raise DataError("jitter_ms_high must be >= jitter_ms_low")
        if self.trajectory not in ("static", "sinusoid"):
            raise DataError(f"unknown trajectory {self.trajectory!r}")
        if self.open_angle_rad == self.closed_angle_rad:
            raise DataError("open and closed calibration angles must differ")

    def as_meta(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_scenario(path) -> SimScenario:
    """Parse a flat key=value scenario file; unknown keys are rejected."""
    path = Path(path)
    known = {f.name: f.type for f in fields(SimScenario)}
    kwargs = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read scenario {path}: {e}") from e
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: line {ln}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise DataError(f"{path}: line {ln}: unknown scenario key {key!r}")
        try:
            if key in ("trajectory",):
                kwargs[key] = value
            elif key in ("seed", "spike_magnitude"):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        except ValueError:
            raise DataError(f"{path}: line {ln}: bad value for {key}: {value!r}") from None
    return SimScenario(**kwargs)


def _tick_count(duration_s: float, rate_hz: float) -> int:
    """Number of ticks i/rate with i/rate < duration."""
    x = duration_s * rate_hz
    if abs(x - round(x)) < 1e-9:
        return int(round(x))
    return int(math.floor(x)) + 1


def _euler_xyz_quat_rows(ex, ey, ez) -> np.ndarray:
    """Vectorized fixed-axis xyz Euler to quaternion rows (w, x, y, z)."""
    hx, hy, hz = 0.5 * ex, 0.5 * ey, 0.5 * ez
    cx, sx = np.cos(hx), np.sin(hx)
    cy, sy = np.cos(hy), np.sin(hy)
    cz, sz = np.cos(hz), np.sin(hz)
    q = np.stack(
        [
            cz * cy * cx + sz * sy * sx,
            cz * cy * sx - sz * sy * cx,
            cz * sy * cx + sz * cy * sx,
            sz * cy * cx - cz * sy * sx,
        ],
        axis=-1,
    )
    # Canonical sign (w >= 0) keeps wire/CSV round-trips deterministic.
    q[q[:, 0] < 0.0] *= -1.0
    return q


def trajectory_fn(scenario: SimScenario):
    """Hand trajectory as a vectorized function of time.

    Returns fn(t_seconds array) -> (angles (n, 6) rad, palm poses (n, 7)).
    """
    if scenario.trajectory == "static":

        def fn(t):
            t = np.atleast_1d(np.asarray(t, dtype=np.float64))
            angles = np.full((len(t), 6), scenario.joint_center_rad)
            pose = np.tile(
                np.array([0.3, 0.0, 0.2, 1.0, 0.0, 0.0, 0.0]), (len(t), 1)
            )
            return angles, pose

        return fn

    jc = scenario.joint_center_rad
    ja = scenario.joint_amplitude_rad
    jf = scenario.joint_frequency_hz
    pa = scenario.palm_translation_m
    ra = scenario.palm_rotation_rad
    pf = scenario.palm_frequency_hz
    phases = np.arange(6) * (math.pi / 6.0)

    def fn(t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        angles = jc + ja * np.sin(2 * math.pi * jf * t[:, None] + phases[None, :])
        w = 2 * math.pi * pf * t
        px = 0.30 + pa * np.sin(w)
        py = 0.00 + pa * np.sin(w + 2.1)
        pz = 0.20 + pa * np.sin(w + 4.2)
        ex = 0.5 * ra * np.sin(w + 3.3)
        ey = 0.5 * ra * np.sin(w + 1.9)
        ez = ra * np.sin(w + 0.7)
        quat = _euler_xyz_quat_rows(ex, ey, ez)
        return angles, np.column_stack([px, py, pz, quat])

    return fn


def angles_to_counts(scenario: SimScenario, angles: np.ndarray) -> np.ndarray:
    """Ideal (noise-free) affine angle-to-ADC map, clamped to 12 bits."""
    counts = scenario.count_offset + scenario.count_scale * np.asarray(angles)
    return np.clip(np.rint(counts), 0, wire.MAX_COUNT).astype(np.uint16)


def scenario_calibration(scenario: SimScenario):
    """Ground-truth open/closed counts implied by the scenario's angle map."""
    open_raw = angles_to_counts(scenario, np.full(6, scenario.open_angle_rad))
    closed_raw = angles_to_counts(scenario, np.full(6, scenario.closed_angle_rad))
    if np.any(open_raw == closed_raw):
        raise DataError("scenario angle map collapses open and closed counts")
    return open_raw.astype(np.int64), closed_raw.astype(np.int64), np.ones(6)


@dataclass
class EncoderStream:
    """Simulated MCU output: per-frame emit times and the raw byte stream."""

    emit_t_ns: np.ndarray
    data: bytes
    counts: np.ndarray  # ground truth after noise, pre-encoding


@dataclass
class PoseStream:
    """Simulated network pose stream: send times and encoded record lines."""

    send_t_ns: np.ndarray
    lines: list
    record_t_ns: np.ndarray
    records: np.ndarray  # (n, 7) ground-truth rows matching the lines


@dataclass
class ReplayLog:
    """What the (ideal) robot executed: commands and achieved poses."""

    t_ns: np.ndarray
    commands: np.ndarray
    poses: np.ndarray


def run_encoder_device(scenario: SimScenario) -> EncoderStream:
    """Emit one 14-byte frame per millisecond of simulated time."""
    rng = np.random.default_rng(
        np.random.SeedSequence(scenario.seed).spawn(3)[_ENCODER_CHILD]
    )
    n = _tick_count(scenario.duration_s, ENCODER_RATE_HZ)
    t = np.arange(n, dtype=np.float64) / ENCODER_RATE_HZ
    emit_s = t * (1.0 + scenario.encoder_skew_ppm * 1e-6)
    emit_ns = np.rint(emit_s * 1e9).astype(np.int64)

    angles, _ = trajectory_fn(scenario)(emit_s)
    counts_f = scenario.count_offset + scenario.count_scale * angles
    if scenario.adc_noise_std > 0:
        counts_f = counts_f + rng.normal(0.0, scenario.adc_noise_std, counts_f.shape)
    counts = np.clip(np.rint(counts_f), 0, wire.MAX_COUNT).astype(np.int64)
    if scenario.spike_prob > 0:
        hit = rng.random(counts.shape) < scenario.spike_prob
        if hit.any():
            v = counts[hit]
            lo = np.maximum(v - scenario.spike_magnitude, 0)
            hi = np.minimum(v + scenario.spike_magnitude, wire.MAX_COUNT)
            counts[hit] = rng.integers(lo, hi + 1)
    counts = counts.astype(np.uint16)
    return EncoderStream(emit_ns, wire.encode_frames(counts), counts)


def run_pose_streamer(scenario: SimScenario) -> PoseStream:
    """Emit pose record lines at a nominal 10 ms period with optional jitter.

    Record timestamps carry the device clock (including skew); send times
    carry the jittered period schedule.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(scenario.seed).spawn(3)[_POSE_CHILD]
    )
    m = _tick_count(scenario.duration_s, POSE_RATE_HZ)
    tau = np.arange(m, dtype=np.float64) / POSE_RATE_HZ
    record_ns = np.rint(tau * (1.0 + scenario.pose_skew_ppm * 1e-6) * 1e9).astype(np.int64)

    period = 1.0 / POSE_RATE_HZ
    if scenario.jitter_ms_low != 0.0 or scenario.jitter_ms_high != 0.0:
        u = rng.uniform(scenario.jitter_ms_low, scenario.jitter_ms_high, m) * 1e-3
    else:
        u = np.zeros(m)
    send = np.empty(m, dtype=np.float64)
    if m:
        send[0] = max(0.0, u[0])
        periods = np.maximum(period + u[1:], 1e-4)
        send[1:] = send[0] + np.cumsum(periods)
    send_ns = np.rint(send * 1e9).astype(np.int64)

    _, records = trajectory_fn(scenario)(tau)
    lines = []
    for k in range(m):
        r = records[k]
        fields_ = [str(int(record_ns[k]))] + [wire.fmt_float(v) for v in r]
        lines.append(" ".join(fields_))
    return PoseStream(send_ns, lines, record_ns, records)


def run_camera_clock(scenario: SimScenario) -> Series:
    """Video frame timestamps at 30 Hz (timestamps only, no pixels)."""
    k = _tick_count(scenario.duration_s, CAMERA_RATE_HZ)
    t = np.arange(k, dtype=np.float64) / CAMERA_RATE_HZ
    t_ns = np.rint(t * (1.0 + scenario.camera_skew_ppm * 1e-6) * 1e9).astype(np.int64)
    return Series(t_ns, np.arange(k, dtype=np.int64))


def run_robot_sink(t_ns, commands, poses) -> ReplayLog:
    """Ideal executor: every command is executed verbatim at its timestamp."""
    t = np.asarray(t_ns, dtype=np.int64)
    cmd = np.asarray(commands, dtype=np.uint16)
    ps = np.asarray(poses, dtype=np.float64)
    if len(t) != len(cmd) or len(t) != len(ps):
        raise DataError("command stream lengths disagree")
    if cmd.size and (cmd.ndim != 2 or cmd.shape[1] != 6):
        raise DataError("commands must be (n, 6)")
    if len(t) > 1 and not np.all(np.diff(t) > 0):
        raise DataError("command timestamps must be strictly increasing")
    return ReplayLog(t.copy(), cmd.copy(), ps.copy())
