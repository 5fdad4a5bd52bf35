# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot inner loops: frame-stream scanning,
biquad filtering, and windowed averaging. Semantics mirror `_pykernels`."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef int FRAME_SIZE = 14
cdef unsigned int MAX_COUNT = 4095


def scan_frames(buf, bint in_resync):
    """See `_pykernels.scan_frames`; identical contract and outputs."""
    cdef const unsigned char[:] b = buf
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t pos = 0, start = 0, keep = 0
    cdef long corrupt = 0
    cdef long resync_bytes = 0
    cdef Py_ssize_t max_frames = n // FRAME_SIZE + 1
    out = np.empty((max_frames, 6), dtype=np.uint16)
    cdef unsigned short[:, ::1] ov = out
    cdef Py_ssize_t nframes = 0
    cdef unsigned int c0, c1, c2, c3, c4, c5
    cdef bint found

    while True:
        if n - pos < 2:
            break
        if b[pos] == 0xAA and b[pos + 1] == 0xBB:
            in_resync = False
            if n - pos < FRAME_SIZE:
                break
            c0 = b[pos + 2] | (b[pos + 3] << 8)
            c1 = b[pos + 4] | (b[pos + 5] << 8)
            c2 = b[pos + 6] | (b[pos + 7] << 8)
            c3 = b[pos + 8] | (b[pos + 9] << 8)
            c4 = b[pos + 10] | (b[pos + 11] << 8)
            c5 = b[pos + 12] | (b[pos + 13] << 8)
            if (c0 <= MAX_COUNT and c1 <= MAX_COUNT and c2 <= MAX_COUNT
                    and c3 <= MAX_COUNT and c4 <= MAX_COUNT and c5 <= MAX_COUNT):
                ov[nframes, 0] = <unsigned short> c0
                ov[nframes, 1] = <unsigned short> c1
                ov[nframes, 2] = <unsigned short> c2
                ov[nframes, 3] = <unsigned short> c3
                ov[nframes, 4] = <unsigned short> c4
                ov[nframes, 5] = <unsigned short> c5
                nframes += 1
                pos += FRAME_SIZE
            else:
                corrupt += 1
                pos += 2
            continue
        # Hunt for the next header; bytes passed over are a garbage run.
        start = pos
        found = False
        while pos + 1 < n:
            if b[pos] == 0xAA and b[pos + 1] == 0xBB:
                found = True
                break
            pos += 1
        if found:
            if not in_resync:
                corrupt += 1
            resync_bytes += pos - start
            in_resync = False
            continue
        keep = n - 1 if b[n - 1] == 0xAA else n
        if keep > start:
            if not in_resync:
                corrupt += 1
            resync_bytes += keep - start
            in_resync = True
        pos = keep
        break

    return np.ascontiguousarray(out[:nframes]), pos, corrupt, resync_bytes, bool(in_resync)


def biquad_apply(x, double b0, double b1, double b2, double a1, double a2,
                 double z1, double z2):
    """Direct form II transposed biquad with explicit initial state."""
    xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] xv = xa
    cdef Py_ssize_t n = xv.shape[0]
    y = np.empty(n, dtype=np.float64)
    cdef double[::1] yv = y
    cdef double s1 = z1, s2 = z2, xi, yi
    cdef Py_ssize_t i
    for i in range(n):
        xi = xv[i]
        yi = b0 * xi + s1
        s1 = b1 * xi - a1 * yi + s2
        s2 = b2 * xi - a2 * yi
        yv[i] = yi
    return y


def moving_average(x, int window):
    """Trailing-window mean with an expanding warm-up window."""
    if window < 1:
        raise ValueError("window must be >= 1")
    xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] xv = xa
    cdef Py_ssize_t n = xv.shape[0]
    y = np.empty(n, dtype=np.float64)
    cdef double[::1] yv = y
    cdef Py_ssize_t i, j, lo
    cdef double s
    for i in range(n):
        lo = i - window + 1
        if lo < 0:
            lo = 0
        s = 0.0
        for j in range(lo, i + 1):
            s += xv[j]
        yv[i] = s / (i - lo + 1)
    return y
