"""Independent oracles shared by thumb-coupling tests.

The constraint system can have up to four exact solutions inside the joint
limits (each distance constraint intersects its joint circle twice). A
local solver can only promise to recover the solution whose basin contains
the init, so recovery tests must exclude instances whose alternate roots
sit closer than the init perturbation. The scanner here enumerates roots
by vectorized grid bracketing plus bisection, fully independent of the
solver.
"""

import numpy as np
from scipy.optimize import brentq

from whed.thumbkin import ExoPose, PassiveThumbState, ThumbCouplingModel, _residual_vec


def rodrigues(axis, angles, v) -> np.ndarray:
    """R(axis, angle) @ v for an array of angles; returns (n, 3)."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    v = np.asarray(v, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)
    c = np.cos(angles)[:, None]
    s = np.sin(angles)[:, None]
    kxv = np.cross(k, v)
    kdv = float(k @ v)
    return v[None, :] * c + kxv[None, :] * s + k[None, :] * (kdv * (1.0 - c))


def enumerate_roots(exo: ExoPose, model: ThumbCouplingModel, grid: int = 800):
    """All (theta2, theta4) zero-residual solutions within the joint limits.

    res_m depends only on theta4; solve it first, then res_d over theta2.
    """
    a_d = exo.t_exo.apply(model.exo_attach_distal)
    a_m = exo.t_exo.apply(model.exo_attach_metacarpal)
    x = np.array([1.0, 0.0, 0.0])

    roots = []
    t4_grid = np.linspace(model.theta4_min, model.theta4_max, grid)
    r_m = rodrigues(model.tm_axis, t4_grid, x * model.metacarpal_attach)
    rm = np.linalg.norm(a_m - r_m, axis=1) - model.link_len_metacarpal
    for i in np.where(np.diff(np.sign(rm)) != 0)[0]:
        t4 = brentq(
            lambda t: _residual_vec(exo, model.theta2_min, t, model)[1],
            t4_grid[i],
            t4_grid[i + 1],
            xtol=1e-12,
        )
        t2_grid = np.linspace(model.theta2_min, model.theta2_max, grid)
        # r_d(theta2) = R4 @ (len_m * x + R_ip(theta2) @ (attach_d * x))
        local = x * model.metacarpal_len + rodrigues(
            model.ip_axis, t2_grid, x * model.distal_attach
        )
        # Build the full R4 once from its action on the basis vectors.
        basis = np.eye(3)
        r4 = np.stack(
            [rodrigues(model.tm_axis, np.array([t4]), b)[0] for b in basis], axis=1
        )
        r_d = local @ r4.T
        rd = np.linalg.norm(a_d - r_d, axis=1) - model.link_len_distal
        for j in np.where(np.diff(np.sign(rd)) != 0)[0]:
            t2 = brentq(
                lambda t: _residual_vec(exo, t, t4, model)[0],
                t2_grid[j],
                t2_grid[j + 1],
                xtol=1e-12,
            )
            roots.append((t2, t4))
    return roots


def alternate_root_gap(exo: ExoPose, q: PassiveThumbState, model: ThumbCouplingModel) -> float:
    """Max-norm distance from q to the nearest OTHER exact solution."""
    gaps = [
        max(abs(t2 - q.theta2), abs(t4 - q.theta4))
        for t2, t4 in enumerate_roots(exo, model)
    ]
    others = [g for g in gaps if g > 1e-4]
    return min(others) if others else float("inf")
