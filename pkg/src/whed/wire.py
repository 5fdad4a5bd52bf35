"""Wire codecs for the two sensor streams.

Encoder frames: 2-byte header 0xAA 0xBB plus six little-endian 16-bit
channel values (12-bit ADC counts, so 0..4095). 14 bytes per frame, no
checksum; the decoder resynchronizes by scanning for the next header.
Known limitation of the checksumless format: a payload corruption can
produce a one-frame false sync, which the out-of-range channel check
almost always rejects.

Pose records: newline-delimited ASCII, one record per line:
``t_ns px py pz qw qx qy qz`` (single spaces, '.' decimals).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import DataError, Quaternion, Timestamp

HEADER = kernels.HEADER
FRAME_SIZE = kernels.FRAME_SIZE
MAX_COUNT = kernels.MAX_COUNT


@dataclass(frozen=True)
class EncoderFrame:
    """One decoded encoder frame: six raw ADC counts plus receipt time."""

    channels: tuple[int, int, int, int, int, int]
    rx_timestamp: Timestamp | None = None


@dataclass(frozen=True)
class PoseWireRecord:
    """One pose stream record: device timestamp, position, orientation."""

    t_ns: Timestamp
    position: np.ndarray
    orientation: Quaternion

    def __post_init__(self) -> None:
        p = np.array(self.position, dtype=np.float64).reshape(3)
        p.flags.writeable = False
        object.__setattr__(self, "position", p)


def encode_frame(channels) -> bytes:
    """Encode six channel values into one 14-byte frame."""
    ch = tuple(int(c) for c in channels)
    if len(ch) != 6:
        raise DataError(f"expected 6 channels, got {len(ch)}")
    for i, c in enumerate(ch):
        if not 0 <= c <= MAX_COUNT:
            raise DataError(f"channel {i} value {c} outside [0, {MAX_COUNT}]")
    out = bytearray(FRAME_SIZE)
    out[0] = 0xAA
    out[1] = 0xBB
    for i, c in enumerate(ch):
        out[2 + 2 * i] = c & 0xFF
        out[3 + 2 * i] = c >> 8
    return bytes(out)


def encode_frames(channels: np.ndarray) -> bytes:
    """Vectorized encoder for an (n, 6) array of channel values."""
    ch = np.asarray(channels)
    if ch.ndim != 2 or ch.shape[1] != 6:
        raise DataError(f"expected an (n, 6) array, got shape {ch.shape}")
    if ch.size and (ch.min() < 0 or ch.max() > MAX_COUNT):
        raise DataError(f"channel values outside [0, {MAX_COUNT}]")
    n = ch.shape[0]
    out = np.empty((n, FRAME_SIZE), dtype=np.uint8)
    out[:, 0] = 0xAA
    out[:, 1] = 0xBB
    out[:, 2:] = ch.astype("<u2").view(np.uint8).reshape(n, 12)
    return out.tobytes()


class FrameDecoder:
    """Stateful stream decoder: feed arbitrary byte chunks, get frames out.

    Tolerates partial frames, garbage, and mid-stream corruption; complete
    header-aligned frames are emitted exactly once regardless of how the
    stream is chunked. `corrupt_frames` counts dropped out-of-range frames
    plus resynchronization events.
    """

    def __init__(self) -> None:
        self._pending = b""
        self._in_resync = False
        self.corrupt_frames = 0
        self.resync_bytes = 0

    def feed(self, data: bytes) -> np.ndarray:
        """Consume a chunk; returns the newly completed frames as (n, 6) uint16."""
        buf = self._pending + bytes(data) if self._pending else bytes(data)
        frames, consumed, corrupt, skipped, in_resync = kernels.scan_frames(
            buf, self._in_resync
        )
        self._pending = buf[consumed:]
        self._in_resync = in_resync
        self.corrupt_frames += corrupt
        self.resync_bytes += skipped
        return frames

    @property
    def pending_bytes(self) -> int:
        return len(self._pending)


def decode_stream(data: bytes, decoder: FrameDecoder | None = None):
    """One-shot convenience: returns (list of EncoderFrame, decoder)."""
    if decoder is None:
        decoder = FrameDecoder()
    frames = decoder.feed(data)
    out = [EncoderFrame(tuple(int(c) for c in row)) for row in frames]
    return out, decoder


def fmt_float(x: float) -> str:
    # repr round-trips exactly; trim the useless trailing ".0".
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def encode_pose_record(rec: PoseWireRecord) -> str:
    """Render one pose record line (no trailing newline)."""
    p = rec.position
    q = rec.orientation
    fields = [str(int(rec.t_ns))] + [fmt_float(v) for v in (p[0], p[1], p[2], q.w, q.x, q.y, q.z)]
    return " ".join(fields)


def decode_pose_record(line: str) -> PoseWireRecord:
    """Parse one pose record line; raises DataError with the reason."""
    fields = line.split()
    if len(fields) != 8:
        raise DataError(f"pose record field count: expected 8, got {len(fields)}")
    try:
        t_ns = int(fields[0])
    except ValueError:
        raise DataError(f"pose record non-numeric timestamp {fields[0]!r}") from None
    try:
        vals = [float(f) for f in fields[1:]]
    except ValueError:
        raise DataError(f"pose record non-numeric field in {fields[1:]!r}") from None
    if not all(np.isfinite(vals)):
        raise DataError("pose record non-finite field")
    qw, qx, qy, qz = vals[3:]
    norm = (qw * qw + qx * qx + qy * qy + qz * qz) ** 0.5
    if abs(norm - 1.0) > 1e-3:
        raise DataError(f"pose record quaternion norm {norm:.6f} deviates from 1 by > 1e-3")
    return PoseWireRecord(t_ns, np.array(vals[:3]), Quaternion(qw, qx, qy, qz))
