"""Planar rod dynamics for a leader/follower pair of point robots.

State layout (leader-referenced)::

    S = [X_l, dX_l, Y_l, dY_l, theta, dtheta]

Wrenches are ``[F_axial, F_perp, tau]`` in the rod frame, where the axial
direction points from the follower end towards the leader end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

X, VX, Y, VY, TH, OM = range(6)


class DomainError(ValueError):
    """Raised when a state or input contains non-finite values."""


@dataclass(frozen=True)
class RodParams:
    m_l: float = 0.04
    m_f: float = 0.04
    m_r: float = 0.01
    l_l: float = 0.8
    l_f: float = 0.8

    def __post_init__(self):
        for name in ("m_l", "m_f", "m_r", "l_l", "l_f"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ValueError(f"{name} must be positive, got {val!r}")

    @property
    def mass(self) -> float:
        return self.m_r + self.m_l + self.m_f

    @property
    def length(self) -> float:
        return self.l_l + self.l_f

    @property
    def rod_inertia(self) -> float:
        return self.m_r * self.length**2 / 12.0

    @property
    def inertia(self) -> float:
        offset = (self.l_l - self.l_f) / 2.0
        return (
            self.rod_inertia
            + self.m_r * offset**2
            + self.m_l * self.l_l**2
            + self.m_f * self.l_f**2
        )

    def swapped(self) -> "RodParams":
        """Parameters seen from the other rod end (roles exchanged)."""
        return replace(self, m_l=self.m_f, m_f=self.m_l, l_l=self.l_f, l_f=self.l_l)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError(f"non-finite value in {a!r}")


def angular_accel(params: RodParams, u, v) -> float:
    return (-v[1] * params.l_f + u[1] * params.l_l + u[2] + v[2]) / params.inertia


def eval_dynamics(params: RodParams, state, u, v) -> np.ndarray:
    """Time derivative of the joint state under leader wrench ``u`` and follower wrench ``v``."""
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_finite(state, u, v)

    th, om = state[TH], state[OM]
    c, s = np.cos(th), np.sin(th)
    ll, m = params.l_l, params.mass
    fa = u[0] + v[0]
    fp = u[1] + v[1]
    alpha = angular_accel(params, u, v)
    q1 = -(ll * s * alpha + ll * c * om**2) + (c * fa - s * fp) / m
    q2 = (ll * c * alpha - ll * s * om**2) + (s * fa + c * fp) / m
    return np.array([state[VX], q1, state[VY], q2, om, alpha])


def dynamics_jacobians(params: RodParams, state, u, v):
    """Partial derivatives of :func:`eval_dynamics` w.r.t. state, ``u`` and ``v``.

    Returns ``(A, Bu, Bv)`` with shapes (6, 6), (6, 3), (6, 3).
    """
    th, om = state[TH], state[OM]
    c, s = np.cos(th), np.sin(th)
    ll, lf, m, J = params.l_l, params.l_f, params.mass, params.inertia
    fa = u[0] + v[0]
    fp = u[1] + v[1]
    alpha = angular_accel(params, u, v)

    A = np.zeros((6, 6))
    A[X, VX] = 1.0
    A[Y, VY] = 1.0
    A[TH, OM] = 1.0
    A[VX, TH] = -ll * c * alpha + ll * s * om**2 + (-s * fa - c * fp) / m
    A[VX, OM] = -2.0 * ll * c * om
    A[VY, TH] = -ll * s * alpha - ll * c * om**2 + (c * fa - s * fp) / m
    A[VY, OM] = -2.0 * ll * s * om

    def input_block(d_alpha):
        # d_alpha: derivative of angular acceleration w.r.t. (F_a, F_p, tau)
        B = np.zeros((6, 3))
        B[OM] = d_alpha
        B[VX] = -ll * s * d_alpha + np.array([c, -s, 0.0]) / m
        B[VY] = ll * c * d_alpha + np.array([s, c, 0.0]) / m
        return B

    Bu = input_block(np.array([0.0, ll / J, 1.0 / J]))
    Bv = input_block(np.array([0.0, -lf / J, 1.0 / J]))
    return A, Bu, Bv


def euler_substep(params: RodParams, state, u, v, h: float) -> np.ndarray:
    """One forward-Euler step of length ``h`` with inputs held constant."""
    if not h > 0:
        raise ValueError(f"step length must be positive, got {h!r}")
    state = np.asarray(state, dtype=float)
    return state + h * eval_dynamics(params, state, u, v)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = np.fmod(a + np.pi, 2.0 * np.pi)
    if w <= 0.0:
        w += 2.0 * np.pi
    return float(w - np.pi)


def follower_position(params: RodParams, state) -> np.ndarray:
    L = params.length
    return np.array([state[X] - L * np.cos(state[TH]), state[Y] - L * np.sin(state[TH])])


def follower_velocity(params: RodParams, state) -> np.ndarray:
    L = params.length
    th, om = state[TH], state[OM]
    return np.array([state[VX] + L * np.sin(th) * om, state[VY] - L * np.cos(th) * om])


def leader_view_of_follower(params: RodParams, state) -> np.ndarray:
    """The leader's estimate of the follower position from its own measurements."""
    state = np.asarray(state, dtype=float)
    _check_finite(state)
    return follower_position(params, state)


def follower_view(params: RodParams, pos, vel, theta: float, omega: float) -> np.ndarray:
    """Rebuild the leader-referenced state from the follower's own measurements."""
    L = params.length
    c, s = np.cos(theta), np.sin(theta)
    return np.array([
        pos[0] + L * c,
        vel[0] - L * s * omega,
        pos[1] + L * s,
        vel[1] + L * c * omega,
        theta,
        omega,
    ])


def swap_view(params: RodParams, state) -> np.ndarray:
    """Same physical configuration, referenced at the opposite rod end.

    The heading gains pi and is wrapped to (-pi, pi]. Applying it twice gives
    back the original state up to a multiple of 2*pi in the heading.
    """
    state = np.asarray(state, dtype=float)
    _check_finite(state)
    pos = follower_position(params, state)
    vel = follower_velocity(params, state)
    return np.array([pos[0], vel[0], pos[1], vel[1], wrap_angle(state[TH] + np.pi), state[OM]])


def swap_view_jacobian(params: RodParams, state) -> np.ndarray:
    L = params.length
    th, om = state[TH], state[OM]
    c, s = np.cos(th), np.sin(th)
    D = np.eye(6)
    D[X, TH] = L * s
    D[VX, TH] = L * c * om
    D[VX, OM] = L * s
    D[Y, TH] = -L * c
    D[VY, TH] = L * s * om
    D[VY, OM] = -L * c
    return D


def flip_wrench(w) -> np.ndarray:
    """Express a wrench in the frame of the opposite rod end (axial and perpendicular axes reverse)."""
    w = np.asarray(w, dtype=float)
    return np.array([-w[0], -w[1], w[2]])


def in_box(w, bounds, tol: float = 0.0) -> bool:
    return bool(np.all(np.abs(np.asarray(w)) <= np.asarray(bounds) + tol))


class EstimationError(RuntimeError):
    """The increment equations could not be solved for the unknown wrench."""


_ROWS = [VX, VY, OM]


def invert_substep(params: RodParams, start, end, known, h: float, unknown: str) -> np.ndarray:
    """Recover one agent's wrench from a single Euler step.

    ``known`` is the other agent's wrench over the step; ``unknown`` names the
    agent being estimated ("leader" or "follower"). Only the velocity and
    angular-rate increments are used; the dynamics are affine in each wrench,
    so the solve is exact for states produced by :func:`euler_substep`.
    """
    if not h > 0:
        raise ValueError(f"step length must be positive, got {h!r}")
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    known = np.asarray(known, dtype=float)
    _check_finite(start, end, known)
    zero = np.zeros(3)
    if unknown == "leader":
        base = eval_dynamics(params, start, zero, known)
        arm = params.l_l
    elif unknown == "follower":
        base = eval_dynamics(params, start, known, zero)
        arm = -params.l_f
    else:
        raise ValueError(f"unknown must be 'leader' or 'follower', got {unknown!r}")
    dvx, dvy, dom = (end[_ROWS] - start[_ROWS]) / h - base[_ROWS]
    # rotate the linear increment into the rod frame; the system is then triangular
    c, s = math.cos(start[TH]), math.sin(start[TH])
    m, J = params.mass, params.inertia
    fa = m * (c * dvx + s * dvy)
    fp = m * (-s * dvx + c * dvy - params.l_l * dom)
    tau = J * dom - arm * fp
    sol = np.array([fa, fp, tau])
    if not np.all(np.isfinite(sol)):
        raise EstimationError("non-finite wrench estimate")
    return sol
