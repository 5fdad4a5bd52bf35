"""Post-processing: master-clock synchronization, the two-stage filter
chain (second-order Butterworth low-pass, then a 30-sample moving
average), and rigid-frame retargeting of phone poses into the palm-base
frame.

Filtering is causal and single-pass. The biquad's delay states are
initialized to the steady-state response of the first sample, so constant
inputs pass through with no startup transient. The induced group delay is
constant and shared by every channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import csvio, kernels
from .core import DataError, NumericalError, RigidTransform, Series

SYNC_GATE_NS = 70_000_000  # matches are dropped beyond this offset
DEFAULT_CUTOFF_HZ = 10.0
DEFAULT_MA_WINDOW = 30
ENCODER_FS_HZ = 1000.0
POSE_FS_HZ = 60.0


# ------------------------------------------------------------------- sync


@dataclass(frozen=True)
class SyncedRecord:
    """One master-clock row: video tick joined with its nearest matches."""

    t_ns: int
    frame_idx: int
    channels: np.ndarray
    pose: np.ndarray


@dataclass
class SyncResult:
    t_ns: np.ndarray
    frame_idx: np.ndarray
    enc_idx: np.ndarray
    pose_idx: np.ndarray
    enc_offset_ns: np.ndarray
    pose_offset_ns: np.ndarray
    dropped_enc: int
    dropped_pose: int

    def __len__(self) -> int:
        return len(self.t_ns)

    def report_text(self) -> str:
        lines = [
            f"video ticks matched: {len(self.t_ns)}",
            f"dropped (encoder offset > {SYNC_GATE_NS / 1e6:.0f} ms): {self.dropped_enc}",
            f"dropped (pose offset > {SYNC_GATE_NS / 1e6:.0f} ms): {self.dropped_pose}",
        ]
        if len(self.t_ns):
            lines.append(f"max encoder offset: {self.enc_offset_ns.max() / 1e6:.3f} ms")
            lines.append(f"max pose offset: {self.pose_offset_ns.max() / 1e6:.3f} ms")
        return "\n".join(lines) + "\n"


def _nearest_indices(ts: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Nearest sample index per query; distance ties go to the earlier one."""
    idx = np.searchsorted(ts, queries)
    lo = np.clip(idx - 1, 0, len(ts) - 1)
    hi = np.clip(idx, 0, len(ts) - 1)
    d_lo = np.abs(queries - ts[lo])
    d_hi = np.abs(ts[hi] - queries)
    return np.where(d_lo <= d_hi, lo, hi)


def synchronize(
    video: Series, encoders: Series, poses: Series, gate_ns: int = SYNC_GATE_NS
) -> SyncResult:
    """Join each 30 Hz video tick with its nearest encoder frame and pose
    sample, discarding ticks where either match exceeds the gate."""
    vt = video.t_ns
    if len(vt) == 0:
        empty = np.empty(0, dtype=np.int64)
        return SyncResult(empty, empty, empty, empty, empty.copy(), empty.copy(), 0, 0)

    if len(encoders) == 0:
        enc_idx = np.zeros(len(vt), dtype=np.int64)
        enc_off = np.full(len(vt), np.iinfo(np.int64).max, dtype=np.int64)
    else:
        enc_idx = _nearest_indices(encoders.t_ns, vt)
        enc_off = np.abs(vt - encoders.t_ns[enc_idx])
    if len(poses) == 0:
        pose_idx = np.zeros(len(vt), dtype=np.int64)
        pose_off = np.full(len(vt), np.iinfo(np.int64).max, dtype=np.int64)
    else:
        pose_idx = _nearest_indices(poses.t_ns, vt)
        pose_off = np.abs(vt - poses.t_ns[pose_idx])

    enc_ok = enc_off <= gate_ns
    pose_ok = pose_off <= gate_ns
    keep = enc_ok & pose_ok
    return SyncResult(
        t_ns=vt[keep],
        frame_idx=np.asarray(video.values, dtype=np.int64)[keep],
        enc_idx=enc_idx[keep],
        pose_idx=pose_idx[keep],
        enc_offset_ns=enc_off[keep],
        pose_offset_ns=pose_off[keep],
        dropped_enc=int(np.count_nonzero(~enc_ok)),
        dropped_pose=int(np.count_nonzero(~pose_ok)),
    )


def synced_records(result: SyncResult, encoders: Series, poses: Series):
    """Materialize SyncedRecord rows from a sync result."""
    ch = np.asarray(encoders.values)
    ps = np.asarray(poses.values)
    return [
        SyncedRecord(
            int(result.t_ns[i]),
            int(result.frame_idx[i]),
            ch[result.enc_idx[i]].copy(),
            ps[result.pose_idx[i]].copy(),
        )
        for i in range(len(result))
    ]


# ---------------------------------------------------------------- filters


@dataclass(frozen=True)
class Biquad:
    """Second-order section y[n] = b0 x + b1 x' + b2 x'' - a1 y' - a2 y''."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float
    fs: float

    def dc_gain(self) -> float:
        return (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)

    def poles(self) -> np.ndarray:
        return np.roots([1.0, self.a1, self.a2])

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def magnitude(self, f_hz: float) -> float:
        """|H| of the digital filter at f_hz (fs from the design)."""
        w = 2.0 * math.pi * f_hz / self.fs
        z = complex(math.cos(w), math.sin(w))
        num = self.b0 + self.b1 / z + self.b2 / (z * z)
        den = 1.0 + self.a1 / z + self.a2 / (z * z)
        return abs(num / den)

    def steady_state(self, x0: float) -> tuple[float, float]:
        """Delay states that make a constant input x0 already settled."""
        y = self.dc_gain() * x0
        return y - self.b0 * x0, self.b2 * x0 - self.a2 * y


def design_butterworth2(fs: float, fc: float) -> Biquad:
    """Second-order Butterworth low-pass via the bilinear transform with
    cutoff prewarping; unity DC gain by construction."""
    if not (fs > 0 and 0 < fc < fs / 2):
        raise NumericalError(f"cutoff must satisfy 0 < fc < fs/2, got fc={fc}, fs={fs}")
    c = 1.0 / math.tan(math.pi * fc / fs)
    sqrt2 = math.sqrt(2.0)
    a0 = c * c + sqrt2 * c + 1.0
    return Biquad(
        b0=1.0 / a0,
        b1=2.0 / a0,
        b2=1.0 / a0,
        a1=(2.0 - 2.0 * c * c) / a0,
        a2=(c * c - sqrt2 * c + 1.0) / a0,
        fs=fs,
    )


def butterworth2_magnitude(f_hz: float, fs: float, fc: float) -> float:
    """Analytic magnitude of the prewarped Butterworth design: the frequency
    axis is mapped through tan, then |H(jW)| = 1/sqrt(1 + (W/Wc)^4)."""
    w = math.tan(math.pi * f_hz / fs)
    wc = math.tan(math.pi * fc / fs)
    return 1.0 / math.sqrt(1.0 + (w / wc) ** 4)


def _check_uniform(t_ns: np.ndarray, fs: float) -> None:
    if len(t_ns) < 2:
        return
    nominal = 1e9 / fs
    periods = np.diff(t_ns)
    worst = np.max(np.abs(periods - nominal))
    if worst > 0.01 * nominal:
        raise DataError(
            f"series is not uniformly sampled at {fs} Hz: worst period deviation "
            f"{worst / 1e6:.3f} ms exceeds 1%"
        )


def filter_series(series: Series, biquad: Biquad) -> Series:
    """Causal single-pass biquad over a uniformly sampled series.

    Values may be (n,) or (n, c); multi-channel data is filtered per column.
    """
    _check_uniform(series.t_ns, biquad.fs)
    x = np.asarray(series.values, dtype=np.float64)
    if len(x) == 0:
        return series.with_values(x.copy())
    if x.ndim == 1:
        cols = [x]
    else:
        cols = [x[:, i] for i in range(x.shape[1])]
    out = []
    for col in cols:
        z1, z2 = biquad.steady_state(float(col[0]))
        out.append(
            kernels.biquad_apply(col, biquad.b0, biquad.b1, biquad.b2, biquad.a1, biquad.a2, z1, z2)
        )
    y = out[0] if x.ndim == 1 else np.column_stack(out)
    return series.with_values(y)


def moving_average(series: Series, window: int = DEFAULT_MA_WINDOW) -> Series:
    """Trailing window mean; the first window-1 outputs average all samples
    seen so far."""
    x = np.asarray(series.values, dtype=np.float64)
    if len(x) == 0:
        return series.with_values(x.copy())
    if x.ndim == 1:
        y = kernels.moving_average(x, window)
    else:
        y = np.column_stack(
            [kernels.moving_average(x[:, i], window) for i in range(x.shape[1])]
        )
    return series.with_values(y)


def two_stage_filter(series: Series, fs: float, fc: float = DEFAULT_CUTOFF_HZ,
                     window: int = DEFAULT_MA_WINDOW) -> Series:
    """The fixed filter order: Butterworth first, moving average second."""
    return moving_average(filter_series(series, design_butterworth2(fs, fc)), window)


def hemisphere_align(quats: np.ndarray) -> np.ndarray:
    """Flip quaternion rows so consecutive rows stay on the same hemisphere."""
    q = np.array(quats, dtype=np.float64)
    if len(q) == 0:
        return q
    sign = np.ones(len(q))
    dots = np.sum(q[1:] * q[:-1], axis=1)
    flip = np.where(dots < 0.0, -1.0, 1.0)
    sign[1:] = np.cumprod(flip)
    return q * sign[:, None]


def filter_pose_series(poses: Series, fc: float = DEFAULT_CUTOFF_HZ,
                       window: int = DEFAULT_MA_WINDOW) -> Series:
    """Two-stage filtering of a 60 Hz pose series.

    Positions are filtered per axis. Orientations are hemisphere-aligned,
    component-filtered with the same chain, then renormalized; this is a
    small-rotation approximation that is well inside tolerance at 60 Hz.
    """
    rows = np.asarray(poses.values, dtype=np.float64)
    if len(rows) == 0:
        return poses.with_values(rows.copy())
    if rows.ndim != 2 or rows.shape[1] != 7:
        raise DataError(f"pose series values must be (n, 7), got {rows.shape}")
    aligned = np.column_stack([rows[:, :3], hemisphere_align(rows[:, 3:])])
    filtered = two_stage_filter(poses.with_values(aligned), POSE_FS_HZ, fc, window)
    out = np.asarray(filtered.values)
    quats = out[:, 3:]
    norms = np.linalg.norm(quats, axis=1)
    bad = np.flatnonzero(norms < 1e-6)
    if len(bad):
        raise NumericalError(
            f"filtered quaternion collapsed near zero at sample {int(bad[0])}"
        )
    out[:, 3:] = quats / norms[:, None]
    return poses.with_values(out)


# ------------------------------------------------------------- retargeting


def retarget_pose(
    phone_pose: RigidTransform,
    t_eef_phone: RigidTransform,
    t_base: RigidTransform,
) -> RigidTransform:
    """EEF pose in the palm-base frame: the fixed phone-mount offset is
    applied first, then the change of frame into the base."""
    return t_base.compose(phone_pose).compose(t_eef_phone)


def retarget_rows(pose_rows: np.ndarray, t_eef_phone: RigidTransform,
                  t_base: RigidTransform) -> np.ndarray:
    out = np.empty_like(pose_rows)
    for i, row in enumerate(pose_rows):
        out[i] = retarget_pose(
            RigidTransform.from_pose7(row), t_eef_phone, t_base
        ).as_pose7()
    return out


# ---------------------------------------------------------------- pipeline


@dataclass
class ProcessResult:
    sync: SyncResult
    synced_channels: np.ndarray
    synced_poses: np.ndarray
    filtered_channels: np.ndarray
    filtered_poses: np.ndarray


def process_session(buffers, out_dir=None, filtering: bool = True,
                    fc: float = DEFAULT_CUTOFF_HZ, window: int = DEFAULT_MA_WINDOW) -> ProcessResult:
    """Synchronize a session and produce raw + filtered master-clock rows.

    Encoder channels are filtered at their native 1 kHz before decimation to
    the 30 Hz master clock; poses are filtered at the 60 Hz resample rate.
    When out_dir is given, writes synced.csv, filtered.csv, sync_report.txt.
    """
    sync = synchronize(buffers.video, buffers.encoders, buffers.poses)

    raw_ch = np.asarray(buffers.encoders.values, dtype=np.float64)
    raw_ps = np.asarray(buffers.poses.values, dtype=np.float64)
    if filtering and len(raw_ch):
        filt_ch_full = np.asarray(
            two_stage_filter(buffers.encoders.with_values(raw_ch), ENCODER_FS_HZ, fc, window).values
        )
    else:
        filt_ch_full = raw_ch
    if filtering and len(raw_ps):
        filt_ps_full = np.asarray(filter_pose_series(buffers.poses, fc, window).values)
    else:
        filt_ps_full = raw_ps

    n = len(sync)
    synced_ch = raw_ch[sync.enc_idx] if n else np.empty((0, 6))
    synced_ps = raw_ps[sync.pose_idx] if n else np.empty((0, 7))
    filt_ch = filt_ch_full[sync.enc_idx] if n else np.empty((0, 6))
    filt_ps = filt_ps_full[sync.pose_idx] if n else np.empty((0, 7))

    result = ProcessResult(sync, synced_ch, synced_ps, filt_ch, filt_ps)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csvio.write_synced(
            out_dir / "synced.csv", sync.t_ns, sync.frame_idx, synced_ch, synced_ps,
            int_channels=True,
        )
        csvio.write_synced(
            out_dir / "filtered.csv", sync.t_ns, sync.frame_idx, filt_ch, filt_ps,
            int_channels=False,
        )
        csvio.write_text(out_dir / "sync_report.txt", sync.report_text())
    return result
