"""Pure-Python (numpy/scipy) kernels: the fallback when the compiled
extension is unavailable. Must match `_ckernels` output exactly for frame
scanning and within float tolerance for the filters."""

from __future__ import annotations

import struct

import numpy as np
from scipy.signal import lfilter

HEADER = b"\xaa\xbb"
FRAME_SIZE = 14
MAX_COUNT = 4095

_PAYLOAD = struct.Struct("<6H")


def scan_frames(buf, in_resync: bool):
    """Scan a byte buffer for header-framed encoder frames.

    Returns (frames, consumed, corrupt, resync_bytes, in_resync):
      frames       (n, 6) uint16 array of channel values
      consumed     bytes consumed; the caller retains buf[consumed:]
      corrupt      corrupt-frame events (out-of-range payloads and
                   resynchronization runs, counted once per maximal run)
      resync_bytes bytes skipped while hunting for a header
      in_resync    True when the buffer ended inside a garbage run
    """
    buf = bytes(buf)
    n = len(buf)
    pos = 0
    corrupt = 0
    resync_bytes = 0
    chunks = []

    while True:
        # Fast path: consume the longest clean run of aligned valid frames.
        if n - pos >= FRAME_SIZE and buf[pos] == 0xAA and buf[pos + 1] == 0xBB:
            k = (n - pos) // FRAME_SIZE
            arr = np.frombuffer(buf, np.uint8, count=k * FRAME_SIZE, offset=pos)
            arr = arr.reshape(k, FRAME_SIZE)
            hdr_ok = (arr[:, 0] == 0xAA) & (arr[:, 1] == 0xBB)
            m = k if hdr_ok.all() else int(np.argmin(hdr_ok))
            if m > 0:
                ch = np.ascontiguousarray(arr[:m, 2:]).view(np.dtype("<u2"))
                valid = (ch <= MAX_COUNT).all(axis=1)
                mm = m if valid.all() else int(np.argmin(valid))
                if mm > 0:
                    chunks.append(ch[:mm])
                    pos += mm * FRAME_SIZE
                    in_resync = False
                    continue

        # Careful path: one step of the scan state machine.
        if n - pos < 2:
            break
        j = buf.find(HEADER, pos)
        if j < 0:
            # No header ahead; keep a trailing 0xAA in case its 0xBB follows.
            keep = n - 1 if buf[n - 1] == 0xAA else n
            if keep > pos:
                if not in_resync:
                    corrupt += 1
                resync_bytes += keep - pos
                in_resync = True
            pos = keep
            break
        if j > pos:
            if not in_resync:
                corrupt += 1
            resync_bytes += j - pos
            pos = j
        in_resync = False
        if n - pos < FRAME_SIZE:
            break
        ch6 = _PAYLOAD.unpack_from(buf, pos + 2)
        if max(ch6) <= MAX_COUNT:
            chunks.append(np.array([ch6], dtype=np.uint16))
            pos += FRAME_SIZE
        else:
            # Header matched but payload is out of 12-bit range: drop it and
            # rescan just past the header in case it was a false sync.
            corrupt += 1
            pos += 2

    if chunks:
        frames = np.ascontiguousarray(np.concatenate(chunks, axis=0), dtype=np.uint16)
    else:
        frames = np.empty((0, 6), dtype=np.uint16)
    return frames, pos, corrupt, resync_bytes, in_resync


def biquad_apply(x, b0, b1, b2, a1, a2, z1, z2):
    """Run a biquad (direct form II transposed) with given initial state."""
    x = np.asarray(x, dtype=np.float64)
    y, _ = lfilter([b0, b1, b2], [1.0, a1, a2], x, zi=np.array([z1, z2]))
    return y


def moving_average(x, window: int):
    """Trailing-window mean; the first window-1 outputs use all samples so far."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if window < 1:
        raise ValueError("window must be >= 1")
    if n == 0:
        return x.copy()
    y = np.empty(n, dtype=np.float64)
    head = min(window - 1, n)
    if head > 0:
        y[:head] = np.cumsum(x[:head]) / np.arange(1, head + 1)
    if n >= window:
        y[window - 1 :] = np.convolve(x, np.ones(window), mode="valid") / window
    return y
