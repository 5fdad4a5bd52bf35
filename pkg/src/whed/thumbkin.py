"""Pose-tolerant thumb coupling model.

The exoskeleton thumb body connects to the passive thumb through two rigid
links (distal and metacarpal) whose free-swiveling ends enforce distances,
not orientations. With palm-frame attachment points r_d(q_p), r_m(q_p) from
the passive-thumb chain and exo-side points p_d, p_m carried by the exo
body pose T_E, the coupling holds when

    || T_E * p_d - r_d(q_p) || = L_d,   || T_E * p_m - r_m(q_p) || = L_m.

The passive chain is a two-segment parameterization: rotate about the TM
axis by theta4, advance along the metacarpal segment, rotate about the IP
axis by theta2, advance along the distal segment. All geometry is
configuration; the defaults are plausible thumb-scale values, not measured
ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .core import DataError, NumericalError, Quaternion, RigidTransform


@dataclass(frozen=True)
class PassiveThumbState:
    """Passive-thumb coordinates: IP flexion theta2, TM ab/ad theta4 (rad)."""

    theta2: float
    theta4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.theta2, self.theta4], dtype=np.float64)


@dataclass(frozen=True)
class ExoPose:
    """Exoskeleton body pose in the palm frame plus the instrumented IP angle."""

    t_exo: RigidTransform
    phi: float = 0.0


@dataclass(frozen=True)
class ThumbCouplingModel:
    """Linkage lengths, chain geometry, and exo-side attachment points.

    Lengths in meters, angles in radians. Axes are unit vectors in the palm
    frame (TM) or the post-TM local frame (IP).
    """

    link_len_distal: float = 0.03
    link_len_metacarpal: float = 0.04
    tm_axis: tuple = (0.0, 0.0, 1.0)
    metacarpal_len: float = 0.045
    metacarpal_attach: float = 0.0225
    ip_axis: tuple = (0.0, 1.0, 0.0)
    distal_len: float = 0.035
    distal_attach: float = 0.0175
    exo_attach_distal: tuple = (0.01, 0.0, 0.02)
    exo_attach_metacarpal: tuple = (-0.02, 0.0, 0.02)
    theta2_min: float = 0.0
    theta2_max: float = 1.6
    theta4_min: float = -0.5
    theta4_max: float = 1.2
    phi_gain: float = 1.0
    phi_offset: float = 0.0

    def __post_init__(self) -> None:
        for name in ("link_len_distal", "link_len_metacarpal", "metacarpal_len", "distal_len"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be > 0")
        if self.theta2_min >= self.theta2_max or self.theta4_min >= self.theta4_max:
            raise DataError("joint limits must satisfy min < max")

    def check_limits(self, q: PassiveThumbState) -> None:
        if not (self.theta2_min <= q.theta2 <= self.theta2_max):
            raise DataError(
                f"theta2={q.theta2:.4f} outside [{self.theta2_min}, {self.theta2_max}]"
            )
        if not (self.theta4_min <= q.theta4 <= self.theta4_max):
            raise DataError(
                f"theta4={q.theta4:.4f} outside [{self.theta4_min}, {self.theta4_max}]"
            )

    def clamp(self, theta2: float, theta4: float) -> PassiveThumbState:
        return PassiveThumbState(
            float(min(max(theta2, self.theta2_min), self.theta2_max)),
            float(min(max(theta4, self.theta4_min), self.theta4_max)),
        )


def load_geometry(path) -> ThumbCouplingModel:
    """Read a key=value geometry file; unknown keys are rejected."""
    path = Path(path)
    known = {f.name for f in fields(ThumbCouplingModel)}
    kwargs = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read geometry {path}: {e}") from e
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: line {ln}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise DataError(f"{path}: line {ln}: unknown geometry key {key!r}")
        parts = value.split(",")
        try:
            if len(parts) == 3:
                kwargs[key] = tuple(float(p) for p in parts)
            else:
                kwargs[key] = float(value)
        except ValueError:
            raise DataError(f"{path}: line {ln}: bad value {value!r}") from None
    return ThumbCouplingModel(**kwargs)


def attachment_points(q: PassiveThumbState, model: ThumbCouplingModel):
    """Palm-frame attachment points (r_d, r_m) of the passive-thumb chain."""
    model.check_limits(q)
    q_tm = Quaternion.from_axis_angle(model.tm_axis, q.theta4)
    x = np.array([1.0, 0.0, 0.0])
    r_m = q_tm.rotate(x * model.metacarpal_attach)
    meta_end = q_tm.rotate(x * model.metacarpal_len)
    q_ip = q_tm * Quaternion.from_axis_angle(model.ip_axis, q.theta2)
    r_d = meta_end + q_ip.rotate(x * model.distal_attach)
    return r_d, r_m


def constraint_residual(exo: ExoPose, q: PassiveThumbState, model: ThumbCouplingModel):
    """Signed length errors (res_d, res_m) of the two coupling constraints."""
    r_d, r_m = attachment_points(q, model)
    a_d = exo.t_exo.apply(model.exo_attach_distal)
    a_m = exo.t_exo.apply(model.exo_attach_metacarpal)
    res_d = float(np.linalg.norm(a_d - r_d)) - model.link_len_distal
    res_m = float(np.linalg.norm(a_m - r_m)) - model.link_len_metacarpal
    return res_d, res_m


def _residual_vec(exo: ExoPose, theta2: float, theta4: float, model) -> np.ndarray:
    # Unclamped residual evaluation used inside the solver.
    q_tm = Quaternion.from_axis_angle(model.tm_axis, theta4)
    x = np.array([1.0, 0.0, 0.0])
    r_m = q_tm.rotate(x * model.metacarpal_attach)
    meta_end = q_tm.rotate(x * model.metacarpal_len)
    q_ip = q_tm * Quaternion.from_axis_angle(model.ip_axis, theta2)
    r_d = meta_end + q_ip.rotate(x * model.distal_attach)
    a_d = exo.t_exo.apply(model.exo_attach_distal)
    a_m = exo.t_exo.apply(model.exo_attach_metacarpal)
    return np.array(
        [
            np.linalg.norm(a_d - r_d) - model.link_len_distal,
            np.linalg.norm(a_m - r_m) - model.link_len_metacarpal,
        ]
    )


JACOBIAN_STEP = 1e-6


def residual_jacobian(exo: ExoPose, q: PassiveThumbState, model: ThumbCouplingModel,
                      h: float = JACOBIAN_STEP) -> np.ndarray:
    """2x2 central-difference Jacobian of the residuals wrt (theta2, theta4)."""
    j = np.empty((2, 2))
    j[:, 0] = (
        _residual_vec(exo, q.theta2 + h, q.theta4, model)
        - _residual_vec(exo, q.theta2 - h, q.theta4, model)
    ) / (2 * h)
    j[:, 1] = (
        _residual_vec(exo, q.theta2, q.theta4 + h, model)
        - _residual_vec(exo, q.theta2, q.theta4 - h, model)
    ) / (2 * h)
    return j


@dataclass(frozen=True)
class ThumbSolveResult:
    state: PassiveThumbState
    residual: tuple
    iterations: int


class ThumbSolveError(NumericalError):
    """Solver failed to converge; carries the best state found."""

    def __init__(self, message: str, state: PassiveThumbState, residual: tuple):
        super().__init__(message)
        self.state = state
        self.residual = residual


RESIDUAL_TOL = 1e-9
STEP_TOL = 1e-12
MAX_ITERATIONS = 100


def solve_passive_thumb(
    exo: ExoPose, model: ThumbCouplingModel, q_init: PassiveThumbState
) -> ThumbSolveResult:
    """Recover the passive-thumb state from an exoskeleton pose.

    Damped Gauss-Newton on the squared constraint residuals, with a
    Levenberg-style lambda schedule (x10 on a failed step, /10 on success).
    The result is clamped to the joint limits and returned with the
    residuals evaluated at the clamped state.
    """
    model.check_limits(q_init)
    q = np.array([q_init.theta2, q_init.theta4], dtype=np.float64)
    lam = 1e-3
    r = _residual_vec(exo, q[0], q[1], model)
    cost = float(r @ r)
    iterations = 0
    stalled = False
    while iterations < MAX_ITERATIONS:
        if np.max(np.abs(r)) < RESIDUAL_TOL:
            break
        iterations += 1
        j = residual_jacobian(exo, PassiveThumbState(q[0], q[1]), model)
        step = None
        for _ in range(25):
            a = j.T @ j + lam * np.eye(2)
            try:
                candidate = np.linalg.solve(a, -(j.T @ r))
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_new = _residual_vec(exo, q[0] + candidate[0], q[1] + candidate[1], model)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                step = candidate
                q = q + candidate
                r, cost = r_new, cost_new
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
        if step is None or float(np.linalg.norm(step)) < STEP_TOL:
            stalled = True
            break

    state = model.clamp(q[0], q[1])
    res = constraint_residual(exo, state, model)
    if max(abs(res[0]), abs(res[1])) < RESIDUAL_TOL:
        return ThumbSolveResult(state, res, iterations)
    reason = "stalled" if stalled else f"hit the {MAX_ITERATIONS}-iteration limit"
    raise ThumbSolveError(
        f"solver {reason} after {iterations} iterations with "
        f"|res| = {np.max(np.abs(res)):.3e} m",
        state,
        res,
    )


def map_phi_to_theta2(phi: float, gain: float = 1.0, offset: float = 0.0) -> float:
    """Instrumented IP angle to passive IP angle, affine transfer."""
    if not math.isfinite(phi):
        raise DataError(f"phi must be finite, got {phi!r}")
    return gain * phi + offset


def fit_phi_calibration(p1: tuple, p2: tuple) -> tuple:
    """Affine (gain, offset) through two (phi, theta2) pairs."""
    (phi1, t1), (phi2, t2) = p1, p2
    if phi1 == phi2:
        raise DataError("calibration points must have distinct phi")
    gain = (t2 - t1) / (phi2 - phi1)
    return gain, t1 - gain * phi1


# ------------------------------------------------------------ wobble space


def _orthonormal_to(v: np.ndarray) -> np.ndarray:
    """Any unit vector orthogonal to unit vector v."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(v, helper)
    return u / np.linalg.norm(u)


def forward_construct_exo_pose(
    q: PassiveThumbState,
    model: ThumbCouplingModel,
    rng: np.random.Generator | None = None,
) -> RigidTransform:
    """Build an exo pose satisfying both constraints exactly for q.

    Places the distal exo attachment on its constraint sphere, intersects
    the metacarpal constraint sphere with the rigid-pair sphere to place
    the second point, then rebuilds the body pose from the two points (the
    roll about their axis is a free parameter). With an rng, the free
    parameters are randomized; otherwise a deterministic canonical pose is
    returned.
    """
    r_d, r_m = attachment_points(q, model)
    p_d = np.asarray(model.exo_attach_distal, dtype=np.float64)
    p_m = np.asarray(model.exo_attach_metacarpal, dtype=np.float64)
    d_exo = float(np.linalg.norm(p_m - p_d))
    if d_exo < 1e-9:
        raise DataError("exo attachment points must be distinct")

    tries = 200
    for _ in range(tries):
        if rng is None:
            u_hat = np.array([0.0, 0.0, 1.0])
        else:
            raw = rng.normal(size=3)
            u_hat = raw / np.linalg.norm(raw)
        a_d = r_d + model.link_len_distal * u_hat
        # Intersect sphere(r_m, L_m) with sphere(a_d, d_exo).
        base = r_m - a_d
        dist = float(np.linalg.norm(base))
        l_m = model.link_len_metacarpal
        if dist < 1e-12 or dist > l_m + d_exo or dist < abs(l_m - d_exo):
            if rng is None:
                raise NumericalError(
                    "canonical construction infeasible for this geometry"
                )
            continue
        # Circle of intersection, centered along base at distance x from a_d.
        x = (dist * dist + d_exo * d_exo - l_m * l_m) / (2.0 * dist)
        rad2 = d_exo * d_exo - x * x
        rad = math.sqrt(max(rad2, 0.0))
        n_hat = base / dist
        e1 = _orthonormal_to(n_hat)
        e2 = np.cross(n_hat, e1)
        angle = 0.0 if rng is None else rng.uniform(0.0, 2.0 * math.pi)
        a_m = a_d + x * n_hat + rad * (math.cos(angle) * e1 + math.sin(angle) * e2)

        # Rigid pose mapping the exo-local pair onto (a_d, a_m), with a
        # roll about the pair axis as the remaining free parameter.
        w1 = (a_m - a_d) / d_exo
        roll = 0.0 if rng is None else rng.uniform(0.0, 2.0 * math.pi)
        w2_base = _orthonormal_to(w1)
        w2 = math.cos(roll) * w2_base + math.sin(roll) * np.cross(w1, w2_base)
        w3 = np.cross(w1, w2)
        e1_loc = (p_m - p_d) / d_exo
        e2_loc = _orthonormal_to(e1_loc)
        e3_loc = np.cross(e1_loc, e2_loc)
        rot = np.column_stack([w1, w2, w3]) @ np.column_stack([e1_loc, e2_loc, e3_loc]).T
        rotation = Quaternion.from_rotation_matrix(rot)
        translation = a_d - rotation.rotate(p_d)
        return RigidTransform(rotation, translation)
    raise NumericalError(f"no feasible exo pose found in {tries} attempts")


def _pose_to_vec6(t: RigidTransform) -> np.ndarray:
    q = t.rotation
    angle = 2.0 * math.acos(min(1.0, abs(q.w)))
    v = np.array([q.x, q.y, q.z])
    nv = np.linalg.norm(v)
    rotvec = (angle / nv) * v if nv > 1e-12 else np.zeros(3)
    return np.concatenate([t.translation, rotvec])


def _vec6_step(t: RigidTransform, delta: np.ndarray) -> RigidTransform:
    """Perturb a pose by (translation delta, rotation-vector delta)."""
    d = np.asarray(delta, dtype=np.float64)
    angle = float(np.linalg.norm(d[3:]))
    if angle > 1e-15:
        dq = Quaternion.from_axis_angle(d[3:] / angle, angle)
    else:
        dq = Quaternion.identity()
    return RigidTransform(dq * t.rotation, t.translation + d[:3])


def _project_to_constraints(
    t: RigidTransform, q: PassiveThumbState, model: ThumbCouplingModel, tol: float,
    max_iter: int = 50,
) -> RigidTransform | None:
    """Minimum-norm Gauss-Newton projection of a pose onto the constraint
    set (q fixed): iterate t <- t + J^T (J J^T + lam I)^-1 (-res)."""
    h = 1e-7
    lam = 1e-10
    cur = t
    for _ in range(max_iter):
        res = np.array(constraint_residual(ExoPose(cur), q, model))
        if max(abs(res[0]), abs(res[1])) < tol:
            return cur
        j = np.empty((2, 6))
        for k in range(6):
            dp = np.zeros(6)
            dp[k] = h
            rp = np.array(constraint_residual(ExoPose(_vec6_step(cur, dp)), q, model))
            dp[k] = -h
            rm = np.array(constraint_residual(ExoPose(_vec6_step(cur, dp)), q, model))
            j[:, k] = (rp - rm) / (2 * h)
        gram = j @ j.T + lam * np.eye(2)
        try:
            y = np.linalg.solve(gram, -res)
        except np.linalg.LinAlgError:
            return None
        cur = _vec6_step(cur, j.T @ y)
    return None


def sample_wobble_space(
    q: PassiveThumbState,
    model: ThumbCouplingModel,
    n: int,
    tol: float = RESIDUAL_TOL,
    seed: int = 0,
    step: float = 0.005,
    seed_pose: RigidTransform | None = None,
    min_separation: float = 1e-8,
):
    """Sample n exo poses that keep the passive thumb posture fixed.

    Random-walk proposals in SE(3) are projected back onto the two-constraint
    set; every returned pose is re-verified by direct residual evaluation.
    Returns (poses, residuals (n, 2)).
    """
    model.check_limits(q)
    if n <= 0:
        return [], np.empty((0, 2))
    rng = np.random.default_rng(seed)
    cur = seed_pose if seed_pose is not None else forward_construct_exo_pose(q, model, rng)
    res0 = constraint_residual(ExoPose(cur), q, model)
    if max(abs(res0[0]), abs(res0[1])) > tol:
        cur = _project_to_constraints(cur, q, model, tol)
        if cur is None:
            raise NumericalError("seed pose cannot be projected onto the constraints")
        res0 = constraint_residual(ExoPose(cur), q, model)

    # The (possibly projected) seed is the first sample; the walk continues
    # from it.
    poses = [cur]
    coords = np.empty((max(n, 1), 6))
    coords[0] = _pose_to_vec6(cur)
    residuals = [res0]
    failures = 0
    proposals = 0
    while len(poses) < n:
        proposals += 1
        if proposals > 40 * n + 100:
            raise NumericalError(
                f"wobble sampling stalled after {proposals} proposals; "
                "try a smaller step size"
            )
        if proposals > 20 and failures > proposals // 2:
            raise NumericalError(
                f"projection failure rate too high ({failures}/{proposals}); "
                "try a smaller step size"
            )
        delta = rng.normal(0.0, step, size=6)
        cand = _project_to_constraints(_vec6_step(cur, delta), q, model, tol)
        if cand is None:
            failures += 1
            continue
        v = _pose_to_vec6(cand)
        k = len(poses)
        if k and float(np.min(np.linalg.norm(coords[:k] - v, axis=1))) < min_separation:
            failures += 1
            continue
        res = constraint_residual(ExoPose(cand), q, model)
        if max(abs(res[0]), abs(res[1])) > tol:
            failures += 1
            continue
        coords[k] = v
        poses.append(cand)
        residuals.append(res)
        cur = cand
    return poses, np.array(residuals)
