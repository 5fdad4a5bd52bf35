"""Core value types shared by the whole pipeline.

Timestamps are session-relative integer nanoseconds. Quaternions are kept
unit-norm and sign-canonicalized (w >= 0) so equality tests and CSV
round-trips are unambiguous. RigidTransform composition follows the frame
chaining convention: ``compose(a_T_b, b_T_c) == a_T_c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

# Session-relative time in integer nanoseconds.
Timestamp = int

TWO_PI = 2.0 * math.pi


class WhedError(Exception):
    """Base class for pipeline errors."""


class DataError(WhedError):
    """Malformed input: bad record, file, schema, or argument."""


class NumericalError(WhedError):
    """Numerical failure: divergence, singularity, or invalid design."""


class GimbalLockError(NumericalError):
    """Euler extraction attempted within 1e-6 rad of pitch = +/-pi/2."""


def wrap_angle(x: float) -> float:
    """Wrap an angle to [-pi, pi).

    Values already inside the interval are returned unchanged, which makes
    wrapping exactly idempotent.
    """
    if not math.isfinite(x):
        raise DataError(f"wrap_angle requires a finite angle, got {x!r}")
    if -math.pi <= x < math.pi:
        return float(x)
    r = math.remainder(x, TWO_PI)
    if r >= math.pi:
        r -= TWO_PI
    elif r < -math.pi:
        r += TWO_PI
    return r


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion (w, x, y, z), normalized and canonicalized to w >= 0."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(n) or n < 1e-12:
            raise NumericalError(f"cannot normalize quaternion with norm {n!r}")
        w, x, y, z = self.w / n, self.x / n, self.y / n, self.z / n
        if w < 0.0:
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @staticmethod
    def identity() -> "Quaternion":
        return Quaternion(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis: Sequence[float], angle: float) -> "Quaternion":
        ax = np.asarray(axis, dtype=np.float64)
        n = float(np.linalg.norm(ax))
        if n < 1e-12:
            raise NumericalError("rotation axis must be nonzero")
        ax = ax / n
        h = 0.5 * angle
        s = math.sin(h)
        return Quaternion(math.cos(h), s * ax[0], s * ax[1], s * ax[2])

    @staticmethod
    def from_rotation_matrix(m: np.ndarray) -> "Quaternion":
        """Build from a 3x3 rotation matrix (Shepperd's method)."""
        m = np.asarray(m, dtype=np.float64)
        t = m[0, 0] + m[1, 1] + m[2, 2]
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return Quaternion(w, x, y, z)

    def to_rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=np.float64,
        )

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def rotate(self, v: Sequence[float]) -> np.ndarray:
        """Rotate a 3-vector."""
        vec = np.asarray(v, dtype=np.float64)
        q = np.array([self.x, self.y, self.z])
        t = 2.0 * np.cross(q, vec)
        return vec + self.w * t + np.cross(q, t)

    def dot(self, other: "Quaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def angle_to(self, other: "Quaternion") -> float:
        """Geodesic rotation angle between two orientations, in radians."""
        d = min(1.0, abs(self.dot(other)))
        return 2.0 * math.acos(d)

    def component_distance(self, other: "Quaternion") -> float:
        """Sign-invariant component distance; resolves far below the ~3e-8
        floor that acos imposes on angle_to near identity."""
        a = self.as_array()
        b = other.as_array()
        return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)


def slerp(q0: Quaternion, q1: Quaternion, u: float) -> Quaternion:
    """Spherical interpolation along the shorter arc, u in [0, 1]."""
    a = q0.as_array()
    b = q1.as_array()
    d = float(np.dot(a, b))
    if d < 0.0:
        b = -b
        d = -d
    if d > 1.0 - 1e-9:
        # Nearly parallel: linear blend, renormalized by the constructor.
        c = a + u * (b - a)
        return Quaternion(c[0], c[1], c[2], c[3])
    theta = math.acos(min(1.0, d))
    s = math.sin(theta)
    c = (math.sin((1.0 - u) * theta) / s) * a + (math.sin(u * theta) / s) * b
    return Quaternion(c[0], c[1], c[2], c[3])


def quat_from_euler_xyz(ex: float, ey: float, ez: float) -> Quaternion:
    """Quaternion for fixed-axis Euler xyz rotations: R = Rz(ez) Ry(ey) Rx(ex)."""
    qx = Quaternion.from_axis_angle((1.0, 0.0, 0.0), ex)
    qy = Quaternion.from_axis_angle((0.0, 1.0, 0.0), ey)
    qz = Quaternion.from_axis_angle((0.0, 0.0, 1.0), ez)
    return qz * qy * qx


# Pitch this close to +/-pi/2 makes roll/yaw extraction ill-conditioned.
GIMBAL_TOL = 1e-6


def euler_xyz_from_quat(q: Quaternion) -> tuple[float, float, float]:
    """Fixed-axis Euler xyz angles (ex, ey, ez) such that R = Rz Ry Rx.

    Raises GimbalLockError when pitch is within GIMBAL_TOL of +/-pi/2.
    """
    m = q.to_rotation_matrix()
    sy = -m[2, 0]
    if abs(sy) >= math.cos(GIMBAL_TOL):
        raise GimbalLockError(f"pitch within {GIMBAL_TOL} rad of +/-pi/2 (sin={sy:.9f})")
    ey = math.asin(max(-1.0, min(1.0, sy)))
    ex = math.atan2(m[2, 1], m[2, 2])
    ez = math.atan2(m[1, 0], m[0, 0])
    return ex, ey, ez


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) element: unit-quaternion rotation plus translation in meters."""

    rotation: Quaternion
    translation: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise DataError(f"non-finite translation {t}")
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(Quaternion.identity(), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Frame chaining: if self = a_T_b and other = b_T_c, returns a_T_c."""
        return RigidTransform(
            self.rotation * other.rotation,
            self.rotation.rotate(other.translation) + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        r = self.rotation.conjugate()
        return RigidTransform(r, -r.rotate(self.translation))

    def apply(self, point: Sequence[float]) -> np.ndarray:
        """Map a point through this transform."""
        return self.rotation.rotate(point) + self.translation

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.to_rotation_matrix()
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return RigidTransform(Quaternion.from_rotation_matrix(m[:3, :3]), m[:3, 3])

    def as_pose7(self) -> np.ndarray:
        """Flatten to [px, py, pz, qw, qx, qy, qz]."""
        q = self.rotation
        t = self.translation
        return np.array([t[0], t[1], t[2], q.w, q.x, q.y, q.z], dtype=np.float64)

    @staticmethod
    def from_pose7(row: Sequence[float]) -> "RigidTransform":
        r = np.asarray(row, dtype=np.float64).reshape(7)
        return RigidTransform(Quaternion(r[3], r[4], r[5], r[6]), r[:3])

    def is_close(self, other: "RigidTransform", pos_tol: float = 1e-9, rot_tol: float = 1e-9) -> bool:
        return (
            float(np.max(np.abs(self.translation - other.translation))) <= pos_tol
            and self.rotation.component_distance(other.rotation) <= rot_tol
        )


class Series:
    """Time-indexed samples: strictly increasing int64 ns timestamps.

    ``values`` is anything indexable row-wise with the same leading length
    (typically an ndarray of per-sample rows, or a list).
    """

    __slots__ = ("t_ns", "values")

    def __init__(self, t_ns, values) -> None:
        t = np.asarray(t_ns, dtype=np.int64)
        if t.ndim != 1:
            raise DataError("timestamps must be one-dimensional")
        if len(t) != len(values):
            raise DataError(f"length mismatch: {len(t)} timestamps, {len(values)} values")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise DataError("timestamps must be strictly increasing")
        self.t_ns = t
        self.values = values

    @staticmethod
    def empty(value_shape: tuple[int, ...] = (), dtype=np.float64) -> "Series":
        return Series(np.empty(0, dtype=np.int64), np.empty((0,) + value_shape, dtype=dtype))

    def __len__(self) -> int:
        return len(self.t_ns)

    def __iter__(self) -> Iterator[tuple[int, object]]:
        for i in range(len(self.t_ns)):
            yield int(self.t_ns[i]), self.values[i]

    def nearest_index(self, t: int) -> int:
        """Index of the temporally nearest sample; ties go to the earlier one."""
        if len(self.t_ns) == 0:
            raise DataError("nearest_index on empty series")
        i = int(np.searchsorted(self.t_ns, t))
        if i == 0:
            return 0
        if i == len(self.t_ns):
            return len(self.t_ns) - 1
        before = t - int(self.t_ns[i - 1])
        after = int(self.t_ns[i]) - t
        return i - 1 if before <= after else i

    def with_values(self, values) -> "Series":
        """Same timestamps, new values (lengths must agree)."""
        return Series(self.t_ns, values)
