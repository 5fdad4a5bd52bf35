"""Session file schemas and readers/writers.

All files are UTF-8 with LF line endings, '.' decimal separators, and a
mandatory header row. Floats are printed with 9 significant digits, which
round-trips within 1e-9 relative. Readers validate the header and every
cell, and report row/column positions on failure.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .core import DataError, Series

ENCODERS_COLUMNS = ["t_ns", "ch0", "ch1", "ch2", "ch3", "ch4", "ch5"]
POSES_COLUMNS = ["t_ns", "px", "py", "pz", "qw", "qx", "qy", "qz"]
VIDEO_COLUMNS = ["t_ns", "frame_idx"]
SYNCED_COLUMNS = ["t_ns", "frame_idx"] + [f"ch{i}" for i in range(6)] + POSES_COLUMNS[1:]
CALIBRATION_COLUMNS = ["channel", "open_raw", "closed_raw", "gain"]
PLAN_COLUMNS = ["t_ns"] + [f"cmd{i}" for i in range(6)] + POSES_COLUMNS[1:]
ERRORS_COLUMNS = ["t_ns", "pos_err", "ang_err"]
WOBBLE_COLUMNS = POSES_COLUMNS[1:] + ["res_d", "res_m"]


def _fmt(x: float) -> str:
    return f"{float(x):.9g}"


def _write_rows(path, columns, rows) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(columns) + "\n")
        f.writelines(rows)


def _read_table(path, columns) -> np.ndarray:
    """Read a CSV into an (n, ncols) float64 array with strict validation."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().rstrip("\r\n")
            expected = ",".join(columns)
            if header != expected:
                raise DataError(f"{path}: bad header {header!r}, expected {expected!r}")
            body = f.read()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    lines = [ln for ln in body.split("\n") if ln.strip()]
    if not lines:
        return np.empty((0, len(columns)), dtype=np.float64)
    try:
        data = np.loadtxt(lines, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        _locate_bad_cell(path, lines, columns)
        raise
    if data.shape[1] != len(columns):
        raise DataError(
            f"{path}: row 2 has {data.shape[1]} columns, expected {len(columns)}"
        )
    if not np.all(np.isfinite(data)):
        r, c = np.argwhere(~np.isfinite(data))[0]
        raise DataError(f"{path}: non-finite value at row {r + 2}, column {columns[c]}")
    return data


def _locate_bad_cell(path, lines, columns):
    """Slow pass to pin down the offending cell for the error message."""
    for r, line in enumerate(lines):
        cells = line.split(",")
        if len(cells) != len(columns):
            raise DataError(
                f"{path}: row {r + 2} has {len(cells)} columns, expected {len(columns)}"
            )
        for c, cell in enumerate(cells):
            try:
                float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {r + 2}, column {columns[c]}: not a number: {cell!r}"
                ) from None
    raise DataError(f"{path}: malformed numeric data")


def _int_column(data, col_idx, path, columns) -> np.ndarray:
    col = data[:, col_idx]
    if col.size and np.any(col != np.floor(col)):
        r = int(np.argwhere(col != np.floor(col))[0])
        raise DataError(
            f"{path}: row {r + 2}, column {columns[col_idx]}: expected an integer"
        )
    return col.astype(np.int64)


# ---------------------------------------------------------------- encoders


def write_encoders(path, series: Series) -> None:
    ch = np.asarray(series.values)
    rows = (
        f"{int(t)},{r[0]},{r[1]},{r[2]},{r[3]},{r[4]},{r[5]}\n"
        for t, r in zip(series.t_ns.tolist(), ch.tolist())
    )
    _write_rows(path, ENCODERS_COLUMNS, rows)


def read_encoders(path) -> Series:
    data = _read_table(path, ENCODERS_COLUMNS)
    t = _int_column(data, 0, path, ENCODERS_COLUMNS)
    ch = np.empty((len(data), 6), dtype=np.int64)
    for i in range(6):
        ch[:, i] = _int_column(data, 1 + i, path, ENCODERS_COLUMNS)
    if ch.size and (ch.min() < 0 or ch.max() > 4095):
        raise DataError(f"{path}: channel value outside [0, 4095]")
    return Series(t, ch.astype(np.uint16))


# ------------------------------------------------------------------- poses


def write_poses(path, series: Series) -> None:
    vals = np.asarray(series.values, dtype=np.float64)
    rows = (
        f"{int(t)}," + ",".join(_fmt(v) for v in row) + "\n"
        for t, row in zip(series.t_ns.tolist(), vals.tolist())
    )
    _write_rows(path, POSES_COLUMNS, rows)


def read_poses(path) -> Series:
    data = _read_table(path, POSES_COLUMNS)
    t = _int_column(data, 0, path, POSES_COLUMNS)
    return Series(t, np.ascontiguousarray(data[:, 1:]))


# ------------------------------------------------------------------- video


def write_video(path, series: Series) -> None:
    idx = np.asarray(series.values)
    rows = (
        f"{int(t)},{int(i)}\n" for t, i in zip(series.t_ns.tolist(), idx.tolist())
    )
    _write_rows(path, VIDEO_COLUMNS, rows)


def read_video(path) -> Series:
    data = _read_table(path, VIDEO_COLUMNS)
    t = _int_column(data, 0, path, VIDEO_COLUMNS)
    idx = _int_column(data, 1, path, VIDEO_COLUMNS)
    return Series(t, idx)


# ---------------------------------------------------------- synced/filtered


def write_synced(path, t_ns, frame_idx, channels, poses, int_channels: bool) -> None:
    """Write synced.csv/filtered.csv rows. Raw streams carry integer channel
    counts; filtered streams carry float channel values."""
    ch = np.asarray(channels)
    ps = np.asarray(poses, dtype=np.float64)

    def rows():
        for i in range(len(t_ns)):
            if int_channels:
                chs = ",".join(str(int(v)) for v in ch[i])
            else:
                chs = ",".join(_fmt(v) for v in ch[i])
            pss = ",".join(_fmt(v) for v in ps[i])
            yield f"{int(t_ns[i])},{int(frame_idx[i])},{chs},{pss}\n"

    _write_rows(path, SYNCED_COLUMNS, rows())


def read_synced(path):
    """Returns (t_ns, frame_idx, channels (n,6) float, poses (n,7) float)."""
    data = _read_table(path, SYNCED_COLUMNS)
    t = _int_column(data, 0, path, SYNCED_COLUMNS)
    idx = _int_column(data, 1, path, SYNCED_COLUMNS)
    return t, idx, np.ascontiguousarray(data[:, 2:8]), np.ascontiguousarray(data[:, 8:])


# ------------------------------------------------------------- calibration


def write_calibration(path, open_raw, closed_raw, gain) -> None:
    rows = (
        f"{i},{int(open_raw[i])},{int(closed_raw[i])},{_fmt(gain[i])}\n"
        for i in range(len(open_raw))
    )
    _write_rows(path, CALIBRATION_COLUMNS, rows)


def read_calibration(path):
    """Returns (open_raw, closed_raw, gain) indexed by channel 0..5."""
    data = _read_table(path, CALIBRATION_COLUMNS)
    chans = _int_column(data, 0, path, CALIBRATION_COLUMNS)
    if sorted(chans.tolist()) != list(range(6)):
        raise DataError(f"{path}: calibration must cover channels 0..5 exactly once")
    order = np.argsort(chans)
    open_raw = _int_column(data, 1, path, CALIBRATION_COLUMNS)[order]
    closed_raw = _int_column(data, 2, path, CALIBRATION_COLUMNS)[order]
    gain = data[order, 3]
    return open_raw, closed_raw, gain


# -------------------------------------------------------------------- plan


def write_plan(path, t_ns, commands, poses) -> None:
    cmd = np.asarray(commands)
    ps = np.asarray(poses, dtype=np.float64)
    rows = (
        f"{int(t_ns[i])},"
        + ",".join(str(int(v)) for v in cmd[i])
        + ","
        + ",".join(_fmt(v) for v in ps[i])
        + "\n"
        for i in range(len(t_ns))
    )
    _write_rows(path, PLAN_COLUMNS, rows)


def read_plan(path):
    data = _read_table(path, PLAN_COLUMNS)
    t = _int_column(data, 0, path, PLAN_COLUMNS)
    cmd = np.empty((len(data), 6), dtype=np.int64)
    for i in range(6):
        cmd[:, i] = _int_column(data, 1 + i, path, PLAN_COLUMNS)
    if cmd.size and (cmd.min() < 0 or cmd.max() > 65535):
        raise DataError(f"{path}: command outside [0, 65535]")
    return t, cmd.astype(np.uint16), np.ascontiguousarray(data[:, 7:])


# ------------------------------------------------------------------ errors


def write_errors(path, t_ns, pos_err, ang_err) -> None:
    rows = (
        f"{int(t_ns[i])},{_fmt(pos_err[i])},{_fmt(ang_err[i])}\n"
        for i in range(len(t_ns))
    )
    _write_rows(path, ERRORS_COLUMNS, rows)


def read_errors(path):
    data = _read_table(path, ERRORS_COLUMNS)
    t = _int_column(data, 0, path, ERRORS_COLUMNS)
    return t, data[:, 1], data[:, 2]


# ------------------------------------------------------------------ wobble


def write_wobble(path, poses, res_d, res_m) -> None:
    ps = np.asarray(poses, dtype=np.float64)
    rows = (
        ",".join(_fmt(v) for v in ps[i]) + f",{_fmt(res_d[i])},{_fmt(res_m[i])}\n"
        for i in range(len(ps))
    )
    _write_rows(path, WOBBLE_COLUMNS, rows)


# ----------------------------------------------------------- meta / report


def write_meta(path, entries: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in entries.items():
            f.write(f"{key}={value}\n")


def read_meta(path) -> dict:
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            for ln, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataError(f"{path}: line {ln}: expected key=value")
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    return out


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
