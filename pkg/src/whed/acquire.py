"""Host-side acquisition: receipt timestamping, the dual-rate pose buffer
with fixed 60 Hz resampling, in-memory session buffering, and post-session
CSV persistence.

The resampler is driven by a fixed tick schedule and interpolates against
the records' device timestamps: output timestamps are exactly the tick
times, so arrival jitter never leaks into the output clock. Nothing is
written to disk until collection stops.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import csvio, simdev, wire
from .core import DataError, Quaternion, Series, Timestamp, slerp

RESAMPLE_RATE_HZ = 60.0
POSE_BUFFER_CAPACITY = 256


def resample_tick_ns(k: int) -> int:
    """Timestamp of resampler tick k: k/60 s, rounded to whole nanoseconds."""
    return int(round(k * 1e9 / RESAMPLE_RATE_HZ))


class SessionClock:
    """Monotonic session-relative receipt stamps in nanoseconds."""

    def __init__(self, now_ns=time.perf_counter_ns) -> None:
        self._now = now_ns
        self._t0 = now_ns()
        self._last = -1

    def stamp(self) -> Timestamp:
        t = self._now() - self._t0
        if t <= self._last:
            t = self._last + 1
        self._last = t
        return t


def stamp_on_receipt(clock: SessionClock, item):
    """Attach a session-relative receipt timestamp to a raw item."""
    return clock.stamp(), item


@dataclass(frozen=True)
class PoseSample:
    """One resampled pose: position (m) and unit orientation at a tick time."""

    t_ns: Timestamp
    position: np.ndarray
    orientation: Quaternion

    def as_pose7(self) -> np.ndarray:
        p, q = self.position, self.orientation
        return np.array([p[0], p[1], p[2], q.w, q.x, q.y, q.z])


class DualRateBuffer:
    """Bounded ring of recent pose records, decoupling reception from
    resampling. Pushes never block; overflow drops the oldest record."""

    def __init__(self, capacity: int = POSE_BUFFER_CAPACITY) -> None:
        self._records = deque(maxlen=capacity)
        self._last_t = None

    def push(self, record: wire.PoseWireRecord) -> None:
        if self._last_t is not None and record.t_ns <= self._last_t:
            raise DataError(
                f"pose record timestamps must increase: {record.t_ns} after {self._last_t}"
            )
        self._last_t = record.t_ns
        self._records.append(record)

    def __len__(self) -> int:
        return len(self._records)

    def sample_at(self, tick_ns: int) -> PoseSample | None:
        """Pose at the tick: interpolated between the bracketing records,
        held at the nearest end when the tick falls outside the buffer."""
        recs = self._records
        if not recs:
            return None
        if tick_ns >= recs[-1].t_ns:
            r = recs[-1]
            return PoseSample(tick_ns, r.position.copy(), r.orientation)
        if tick_ns <= recs[0].t_ns:
            r = recs[0]
            return PoseSample(tick_ns, r.position.copy(), r.orientation)
        # Scan from the newest record; ticks track the head of the stream.
        hi = len(recs) - 1
        while recs[hi - 1].t_ns > tick_ns:
            hi -= 1
        r0, r1 = recs[hi - 1], recs[hi]
        u = (tick_ns - r0.t_ns) / (r1.t_ns - r0.t_ns)
        pos = r0.position + u * (r1.position - r0.position)
        ori = slerp(r0.orientation, r1.orientation, u)
        return PoseSample(tick_ns, pos, ori)


class Resampler60:
    """Fixed-rate tick driver over a DualRateBuffer."""

    def __init__(self, buffer: DualRateBuffer) -> None:
        self.buffer = buffer
        self.next_tick = 0
        self.gap_count = 0
        self.emitted = []

    def advance_to(self, now_ns: int) -> None:
        """Emit a sample for every tick at or before now_ns."""
        while resample_tick_ns(self.next_tick) <= now_ns:
            tick = resample_tick_ns(self.next_tick)
            sample = self.buffer.sample_at(tick)
            if sample is None:
                self.gap_count += 1
            else:
                self.emitted.append(sample)
            self.next_tick += 1


@dataclass
class SessionBuffers:
    """Everything a collection session holds in memory before persisting."""

    encoders: Series
    poses: Series
    video: Series
    meta: dict = field(default_factory=dict)


def resample_pose_stream(pose_stream: simdev.PoseStream, duration_s: float):
    """Feed pose arrivals through the dual-rate buffer and 60 Hz resampler.

    Records are pushed in arrival order; every tick at or before an arrival
    is emitted before that record becomes visible. Returns
    (poses Series, gap tick count, receipt-minus-record offsets).
    """
    buffer = DualRateBuffer()
    resampler = Resampler60(buffer)
    end_ns = int(round(duration_s * 1e9))
    offsets = []
    for k in range(len(pose_stream.send_t_ns)):
        arrival = int(pose_stream.send_t_ns[k])
        if arrival > end_ns:
            break
        resampler.advance_to(arrival - 1)
        record = wire.decode_pose_record(pose_stream.lines[k])
        buffer.push(record)
        offsets.append(arrival - record.t_ns)
    # Ticks strictly inside the session window.
    last_tick = int((end_ns - 1) * RESAMPLE_RATE_HZ / 1e9)
    resampler.advance_to(resample_tick_ns(last_tick))

    samples = resampler.emitted
    pose_t = np.array([s.t_ns for s in samples], dtype=np.int64)
    pose_rows = (
        np.stack([s.as_pose7() for s in samples])
        if samples
        else np.empty((0, 7))
    )
    return Series(pose_t, pose_rows), resampler.gap_count, offsets


def run_acquisition(
    encoder_stream: simdev.EncoderStream,
    pose_stream: simdev.PoseStream,
    video: Series,
    duration_s: float,
) -> SessionBuffers:
    """Drive acquisition over simulated device outputs.

    Encoder frames are stamped with their arrival times; pose records are
    pushed into the dual-rate buffer in arrival order while the 60 Hz
    resampler ticks in between; the camera clock is recorded as-is.
    """
    decoder = wire.FrameDecoder()
    frames = decoder.feed(encoder_stream.data)
    if len(frames) != len(encoder_stream.emit_t_ns):
        raise DataError(
            f"decoded {len(frames)} frames but expected {len(encoder_stream.emit_t_ns)}"
        )
    encoders = Series(encoder_stream.emit_t_ns, frames)

    poses, gap_count, offsets = resample_pose_stream(pose_stream, duration_s)

    meta = {
        "duration_s": duration_s,
        "encoder_frames": len(encoders),
        "encoder_corrupt_frames": decoder.corrupt_frames,
        "pose_records": len(offsets),
        "pose_samples": len(poses),
        "pose_gap_ticks": gap_count,
        "video_frames": len(video),
        "clock_offset_ns": int(np.median(offsets)) if offsets else 0,
    }
    return SessionBuffers(encoders, poses, video, meta)


SESSION_FILES = ("encoders.csv", "poses.csv", "video.csv", "meta.txt")


def persist_session(buffers: SessionBuffers, directory) -> dict:
    """Write the session CSVs; partial output is removed on failure."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {name: directory / name for name in SESSION_FILES}
    written = []
    try:
        csvio.write_encoders(paths["encoders.csv"], buffers.encoders)
        written.append(paths["encoders.csv"])
        csvio.write_poses(paths["poses.csv"], buffers.poses)
        written.append(paths["poses.csv"])
        csvio.write_video(paths["video.csv"], buffers.video)
        written.append(paths["video.csv"])
        csvio.write_meta(paths["meta.txt"], buffers.meta)
        written.append(paths["meta.txt"])
    except BaseException:
        for p in written:
            try:
                p.unlink()
            except OSError:
                pass
        raise
    return paths


def load_session(directory) -> SessionBuffers:
    directory = Path(directory)
    encoders = csvio.read_encoders(directory / "encoders.csv")
    poses = csvio.read_poses(directory / "poses.csv")
    video = csvio.read_video(directory / "video.csv")
    meta_path = directory / "meta.txt"
    meta = csvio.read_meta(meta_path) if meta_path.exists() else {}
    return SessionBuffers(encoders, poses, video, meta)


def collect_session(scenario: simdev.SimScenario) -> SessionBuffers:
    """Run all simulated sources through acquisition for one session."""
    enc = simdev.run_encoder_device(scenario)
    pose = simdev.run_pose_streamer(scenario)
    video = simdev.run_camera_clock(scenario)
    buffers = run_acquisition(enc, pose, video, scenario.duration_s)
    buffers.meta = {**scenario.as_meta(), **buffers.meta}
    return buffers
