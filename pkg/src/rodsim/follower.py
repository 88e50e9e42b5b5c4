"""Follower side: critical-obstacle selection, reactive policy and leader-input inference."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from rodsim.dynamics import RodParams, invert_substep

TIE_TOL = 1e-9


@dataclass(frozen=True)
class FollowerConfig:
    d_cr: float = 1.1
    K2: float = 0.5
    input_bounds: tuple[float, float, float] = (5.0, 5.0, 0.5)

    def __post_init__(self):
        if not self.d_cr > 0:
            raise ValueError("critical radius must be positive")
        if not 0.0 <= self.K2 < 1.0:
            raise ValueError("K2 must lie in [0, 1)")
        if any(not b > 0 for b in self.input_bounds):
            raise ValueError("input bounds must be positive")

    @cached_property
    def K1(self) -> np.ndarray:
        fa, fp, _ = self.input_bounds
        g = (1.0 - self.K2) / self.d_cr
        k = np.diag([fa * g, fp * g, 0.0])
        k.flags.writeable = False
        return k


class CriticalObstacle(NamedTuple):
    """Closest cloud point within the critical radius of the follower.

    ``phi`` is the signed angle from the obstacle-to-follower direction to the
    follower-to-leader direction, so the obstacle sits at world heading
    ``theta - phi + pi`` as seen from the follower.
    """

    point: np.ndarray
    d: float
    phi: float


def _signed_angle(a, b) -> float:
    """Angle rotating vector ``a`` onto ``b``, in (-pi, pi]."""
    ang = float(np.arctan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1]))
    return np.pi if ang == -np.pi else ang


def select_critical(
    cloud, follower_pos, follower_vel, leader_pos, cfg: FollowerConfig, tol_tie: float = TIE_TOL
) -> Optional[CriticalObstacle]:
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return None
    R = np.asarray(follower_pos, dtype=float)
    diff = pts - R
    dist = np.hypot(diff[:, 0], diff[:, 1])
    inside = dist <= cfg.d_cr
    if not inside.any():
        return None
    dmin = dist[inside].min()
    idx = np.flatnonzero(inside & (dist <= dmin + tol_tie))
    if len(idx) > 1:
        vel = np.asarray(follower_vel, dtype=float)
        speed = float(np.hypot(*vel))
        cand = pts[idx]
        if speed > 0.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                cosine = (diff[idx] @ vel) / (speed * dist[idx])
            cosine = np.where(dist[idx] > 0, cosine, -np.inf)
            # lexsort: last key is primary
            order = np.lexsort((cand[:, 1], cand[:, 0], -cosine))
        else:
            order = np.lexsort((cand[:, 1], cand[:, 0]))
        idx = idx[order]
    k = idx[0]
    d = float(dist[k])
    to_leader = np.asarray(leader_pos, dtype=float) - R
    phi = _signed_angle(-diff[k], to_leader) if d > 0 else 0.0
    return CriticalObstacle(pts[k].copy(), d, phi)


def reactive_term(d: float, phi: float, cfg: FollowerConfig) -> np.ndarray:
    return cfg.K1 @ ((cfg.d_cr - d) * np.array([np.cos(phi), -np.sin(phi), 0.0]))


def reactive_input(u_hat, crit: Optional[CriticalObstacle], cfg: FollowerConfig) -> np.ndarray:
    """Assist the leader with ``K2 * u_hat`` plus a push away from a critical obstacle."""
    v = cfg.K2 * np.asarray(u_hat, dtype=float)
    if crit is not None:
        if crit.d > cfg.d_cr or crit.d < 0:
            raise ValueError(f"critical distance {crit.d} outside [0, {cfg.d_cr}]")
        v = v + reactive_term(crit.d, crit.phi, cfg)
    b = np.asarray(cfg.input_bounds)
    return np.clip(v, -b, b)


def infer_leader_input(params: RodParams, S_t, S_t_delta, v_prev, delta: float) -> np.ndarray:
    """Estimate the leader's wrench from the follower's view of one Euler sub-step."""
    return invert_substep(params, S_t, S_t_delta, v_prev, delta, unknown="leader")
