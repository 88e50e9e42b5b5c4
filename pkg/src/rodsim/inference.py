"""Leader side decoding of the follower's reaction into an obstacle point."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from rodsim.dynamics import RodParams, follower_position, invert_substep, TH
from rodsim.environment import PointCloud
from rodsim.follower import FollowerConfig

log = logging.getLogger(__name__)

REACT_TOL = 1e-6


class InconsistentResidual(ValueError):
    """The residual is larger than any reaction the follower policy can produce."""


class RecoveredObstacle(NamedTuple):
    point: np.ndarray
    d: float
    phi: float


@dataclass
class InferenceResult:
    v_hat: np.ndarray
    residual: np.ndarray
    obstacle: Optional[RecoveredObstacle] = None
    inconsistent: bool = False
    # follower torque beyond the pure-assist prediction; zero under this policy
    torque_mismatch: float = 0.0


def infer_follower_input(params: RodParams, S_start, S_end, u_t, window: float) -> np.ndarray:
    """Estimate the follower's wrench over ``[S_start, S_end]`` given the leader's own wrench."""
    return invert_substep(params, S_start, S_end, u_t, window, unknown="follower")


def assist_residual(v_hat, u_t, cfg: FollowerConfig) -> np.ndarray:
    v_hat = np.asarray(v_hat, dtype=float)
    u_t = np.asarray(u_t, dtype=float)
    return v_hat[:2] - cfg.K2 * u_t[:2]


def recover_obstacle(
    cfg: FollowerConfig,
    residual,
    leader_state,
    params: RodParams,
    tol_react: float = REACT_TOL,
    tol_dist: float = 1e-6,
) -> Optional[RecoveredObstacle]:
    """Invert the reactive term to locate the follower's critical obstacle.

    Returns None when the residual is within ``tol_react`` (pure assist).
    Raises :class:`InconsistentResidual` when the implied distance is negative.
    """
    residual = np.asarray(residual, dtype=float)
    if np.hypot(*residual) <= tol_react:
        return None
    k1 = np.diag(cfg.K1)
    a = residual[0] / k1[0]
    p = residual[1] / k1[1]
    phi = float(np.arctan2(-p, a))
    if phi == -np.pi:
        phi = np.pi
    d = cfg.d_cr - float(np.hypot(a, p))
    if d < -tol_dist:
        raise InconsistentResidual(f"implied critical distance {d:.3g} is negative")
    d = min(max(d, 0.0), cfg.d_cr)
    R = follower_position(params, leader_state)
    heading = leader_state[TH] - phi
    point = R - d * np.array([np.cos(heading), np.sin(heading)])
    return RecoveredObstacle(point, d, phi)


def decode_follower(
    params: RodParams,
    cfg: FollowerConfig,
    S_start,
    S_end,
    u_t,
    window: float,
    tol_react: float = REACT_TOL,
) -> InferenceResult:
    """Full leader-side pipeline: wrench estimate, residual, obstacle recovery.

    ``S_start`` is the state when the follower's current input took effect; the
    follower position used for placement is read from it.
    """
    v_hat = infer_follower_input(params, S_start, S_end, u_t, window)
    residual = assist_residual(v_hat, u_t, cfg)
    res = InferenceResult(v_hat, residual)
    res.torque_mismatch = float(v_hat[2] - cfg.K2 * np.asarray(u_t, dtype=float)[2])
    try:
        res.obstacle = recover_obstacle(cfg, residual, S_start, params, tol_react)
    except InconsistentResidual as exc:
        log.warning("discarding inferred obstacle: %s", exc)
        res.inconsistent = True
    return res


def update_known_obstacles(
    C_l: PointCloud, newly_sensed, inferred=None, step: int = 0, copy: bool = True,
    source: str = "sensed",
) -> PointCloud:
    """Merge freshly sensed points and an optional inferred point into the leader's cloud."""
    out = C_l.copy() if copy else C_l
    if newly_sensed is not None and len(newly_sensed):
        out.add(newly_sensed, source=source, step=step)
    if inferred is not None:
        out.add(np.asarray(inferred, dtype=float).reshape(1, 2), source="inferred", step=step)
    return out
