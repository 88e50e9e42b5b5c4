"""Leader MPC: soft-penalty obstacle avoidance solved by projected gradient descent."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import math

import numpy as np
from scipy.spatial import cKDTree

from rodsim.dynamics import (
    RodParams,
    TH,
    X,
    Y,
    dynamics_jacobians,
    eval_dynamics,
    swap_view,
    swap_view_jacobian,
)

Q_S_DEFAULT = (120.0, 4.0, 120.0, 4.0, 0.0, 0.01)
Q_I_DEFAULT = (0.05, 0.05, 0.01)
S_TAR_DEFAULT = (3.0, 0.0, 3.95, 0.0, 0.0, 0.0)


class SolverError(RuntimeError):
    """The optimizer produced a non-finite cost."""


@dataclass(frozen=True)
class MpcConfig:
    N: int = 3
    T_s: float = 0.03
    Q_s: tuple[float, ...] = Q_S_DEFAULT
    Q_i: tuple[float, ...] = Q_I_DEFAULT
    S_tar: tuple[float, ...] = S_TAR_DEFAULT
    alpha_samples: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    d_safe: float = 0.5
    w_obs: float = 500.0
    input_bounds: tuple[float, float, float] = (5.0, 5.0, 0.5)
    K2: float = 0.5
    max_iters: int = 200
    grad_step: float = 1e-6
    tol: float = 1e-6
    gradient: str = "analytic"  # or "fd"

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon must be at least one step")
        if not self.T_s > 0:
            raise ValueError("T_s must be positive")
        if len(self.Q_s) != 6 or len(self.Q_i) != 3 or len(self.S_tar) != 6:
            raise ValueError("Q_s, S_tar need 6 entries and Q_i needs 3")
        if min(self.Q_s) < 0 or min(self.Q_i) < 0:
            raise ValueError("weights must be non-negative")
        a = self.alpha_samples
        if not a or min(a) < 0 or max(a) > 1 or 0.0 not in a or 1.0 not in a:
            raise ValueError("alpha samples must lie in [0, 1] and include both ends")
        if not (self.d_safe > 0 and self.w_obs > 0):
            raise ValueError("d_safe and w_obs must be positive")
        if self.gradient not in ("analytic", "fd"):
            raise ValueError(f"unknown gradient mode {self.gradient!r}")

    @property
    def lower(self) -> np.ndarray:
        return -np.tile(np.asarray(self.input_bounds, dtype=float), self.N)

    @property
    def upper(self) -> np.ndarray:
        return np.tile(np.asarray(self.input_bounds, dtype=float), self.N)


@dataclass
class MpcSolution:
    U: np.ndarray  # (N, 3)
    predicted_states: np.ndarray  # (N + 1, 6)
    cost: float
    iterations: int
    converged: bool
    cost_trace: list[float] = field(default_factory=list)


def predict(params: RodParams, cfg: MpcConfig, S0, U) -> np.ndarray:
    """Roll the Euler model forward with the follower assumed to assist (v = K2 u)."""
    U = np.asarray(U, dtype=float).reshape(-1, 3)
    if len(U) != cfg.N:
        raise ValueError(f"expected {cfg.N} inputs, got {len(U)}")
    S = np.empty((cfg.N + 1, 6))
    S[0] = S0
    for k in range(cfg.N):
        S[k + 1] = S[k] + cfg.T_s * eval_dynamics(params, S[k], U[k], cfg.K2 * U[k])
    return S


def _rollout(params: RodParams, S0, U, h: float, K2: float) -> np.ndarray:
    """Scalar-math twin of :func:`predict` used inside the optimizer loop."""
    ll, lf = params.l_l, params.l_f
    inv_m, inv_J = 1.0 / params.mass, 1.0 / params.inertia
    g = 1.0 + K2
    x, vx, y, vy, th, om = (float(v) for v in S0)
    out = [(x, vx, y, vy, th, om)]
    for k in range(len(U) // 3):
        fa, fp, tau = U[3 * k], U[3 * k + 1], U[3 * k + 2]
        c, s = math.cos(th), math.sin(th)
        alpha = (fp * (ll - K2 * lf) + g * tau) * inv_J
        fa_t, fp_t = g * fa, g * fp
        om2 = om * om
        q1 = -(ll * s * alpha + ll * c * om2) + (c * fa_t - s * fp_t) * inv_m
        q2 = (ll * c * alpha - ll * s * om2) + (s * fa_t + c * fp_t) * inv_m
        x, vx, y, vy, th, om = (
            x + h * vx, vx + h * q1, y + h * vy, vy + h * q2, th + h * om, om + h * alpha
        )
        out.append((x, vx, y, vy, th, om))
    return np.array(out)


def _hinge(cfg: MpcConfig, d):
    return np.maximum(0.0, cfg.d_safe - d)


def obstacle_penalty(cfg: MpcConfig, leader_pos, follower_pos, cloud) -> float:
    """Sum of hinge-squared penalties over sampled rod points."""
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return 0.0
    a = np.asarray(cfg.alpha_samples)[:, None]
    body = a * np.asarray(leader_pos, dtype=float) + (1.0 - a) * np.asarray(follower_pos, dtype=float)
    d = np.sqrt(((body[:, None, :] - pts[None, :, :]) ** 2).sum(-1)).min(axis=1)
    return float(cfg.w_obs * np.sum(_hinge(cfg, d) ** 2))


class MpcProblem:
    """Cost and gradient of the horizon problem for one solve.

    ``reference_swapped`` makes the tracking term act on the state seen from
    the other rod end, so after a role switch the original leader is still the
    one steered to the target.
    """

    def __init__(self, params: RodParams, cfg: MpcConfig, S0, cloud=None, bounds=None,
                 reference_swapped: bool = False):
        self.params = params
        self.cfg = cfg
        self.S0 = np.asarray(S0, dtype=float)
        pts = np.zeros((0, 2)) if cloud is None else np.asarray(getattr(cloud, "points", cloud), dtype=float)
        self.pts = pts.reshape(-1, 2)
        self.tree = cKDTree(self.pts) if len(self.pts) else None
        self.bounds = None if bounds is None else np.asarray(bounds, dtype=float)
        self.swapped = reference_swapped
        self.Qs = np.asarray(cfg.Q_s, dtype=float)
        self.Qi = np.tile(np.asarray(cfg.Q_i, dtype=float), cfg.N)
        self.S_tar = np.asarray(cfg.S_tar, dtype=float)
        self.beta = (1.0 - np.asarray(cfg.alpha_samples, dtype=float)) * params.length
        self.n_evals = 0

    # -- pieces -----------------------------------------------------------
    def _body(self, S):
        # S: (K, 6) -> body samples (K, n, 2)
        c = np.cos(S[:, TH])[:, None]
        s = np.sin(S[:, TH])[:, None]
        bx = S[:, X][:, None] - self.beta[None, :] * c
        by = S[:, Y][:, None] - self.beta[None, :] * s
        return np.stack([bx, by], axis=-1)

    def _penalty(self, S, need_grad: bool):
        """Obstacle and workspace-bound penalties summed over stages 1..N."""
        cfg = self.cfg
        body = self._body(S)  # (K, n, 2)
        K, n, _ = body.shape
        cost = 0.0
        dbody = np.zeros_like(body) if need_grad else None
        if self.tree is not None:
            flat = body.reshape(-1, 2)
            d, idx = self.tree.query(flat, distance_upper_bound=cfg.d_safe)
            active = np.isfinite(d)
            if active.any():
                h = cfg.d_safe - d[active]
                cost += cfg.w_obs * float(h @ h)
                if need_grad:
                    diff = flat[active] - self.pts[idx[active]]
                    da = d[active]
                    scale = np.where(da > 0, -2.0 * cfg.w_obs * h / np.where(da > 0, da, 1.0), 0.0)
                    g = np.zeros_like(flat)
                    g[active] = scale[:, None] * diff
                    dbody += g.reshape(K, n, 2)
        if self.bounds is not None:
            lo, hi = self.bounds[:2], self.bounds[2:]
            h_lo = _hinge(cfg, body - lo)
            h_hi = _hinge(cfg, hi - body)
            cost += cfg.w_obs * float(np.sum(h_lo * h_lo) + np.sum(h_hi * h_hi))
            if need_grad:
                dbody += -2.0 * cfg.w_obs * (h_lo - h_hi)
        if not need_grad:
            return cost, None
        gS = np.zeros((K, 6))
        gS[:, X] = dbody[..., 0].sum(axis=1)
        gS[:, Y] = dbody[..., 1].sum(axis=1)
        c = np.cos(S[:, TH])[:, None]
        s = np.sin(S[:, TH])[:, None]
        gS[:, TH] = (dbody[..., 0] * self.beta * s - dbody[..., 1] * self.beta * c).sum(axis=1)
        return cost, gS

    def _tracking(self, S, need_grad: bool):
        if not self.swapped:
            E = S - self.S_tar
            cost = float(np.sum(self.Qs * E * E))
            return cost, (2.0 * self.Qs * E if need_grad else None)
        cost = 0.0
        grads = np.zeros_like(S) if need_grad else None
        for k, s in enumerate(S):
            e = swap_view(self.params, s) - self.S_tar
            cost += float(e @ (self.Qs * e))
            if need_grad:
                grads[k] = swap_view_jacobian(self.params, s).T @ (2.0 * self.Qs * e)
        return cost, grads

    # -- public -----------------------------------------------------------
    def rollout(self, U):
        return _rollout(self.params, self.S0, np.asarray(U, dtype=float).reshape(-1), self.cfg.T_s, self.cfg.K2)

    def cost(self, Uflat) -> float:
        self.n_evals += 1
        Uflat = np.asarray(Uflat, dtype=float)
        S = self.rollout(Uflat)
        track, _ = self._tracking(S[1:], False)
        pen, _ = self._penalty(S[1:], False)
        return track + pen + float(Uflat @ (self.Qi * Uflat))

    def cost_grad(self, Uflat):
        if self.cfg.gradient == "fd":
            return self.cost(Uflat), self.fd_gradient(Uflat)
        self.n_evals += 1
        cfg, p = self.cfg, self.params
        Uflat = np.asarray(Uflat, dtype=float)
        U = Uflat.reshape(cfg.N, 3)
        S = self.rollout(Uflat)
        track, gt = self._tracking(S[1:], True)
        pen, gp = self._penalty(S[1:], True)
        stage_grad = gt + gp  # d cost / d S_k for k = 1..N
        total = track + pen + float(Uflat @ (self.Qi * Uflat))
        grad = 2.0 * self.Qi * Uflat
        lam = stage_grad[-1].copy()
        h = cfg.T_s
        for k in range(cfg.N - 1, -1, -1):
            A, Bu, Bv = dynamics_jacobians(p, S[k], U[k], cfg.K2 * U[k])
            grad[3 * k:3 * k + 3] += h * (Bu + cfg.K2 * Bv).T @ lam
            if k > 0:
                lam = stage_grad[k - 1] + lam + h * (A.T @ lam)
        return total, grad

    def fd_gradient(self, Uflat, step: Optional[float] = None) -> np.ndarray:
        step = self.cfg.grad_step if step is None else step
        Uflat = np.asarray(Uflat, dtype=float)
        g = np.zeros_like(Uflat)
        for i in range(len(Uflat)):
            e = np.zeros_like(Uflat)
            e[i] = step
            g[i] = (self.cost(Uflat + e) - self.cost(Uflat - e)) / (2.0 * step)
        return g


def _project(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def projected_gradient(problem: MpcProblem, x0, lo, hi, max_iters: int, tol: float,
                       armijo: float = 1e-4, max_backtracks: int = 40):
    """Projected gradient descent with Barzilai-Borwein trial steps and backtracking.

    Every accepted step strictly decreases the cost, so the returned trace is
    non-increasing.
    """
    x = _project(np.asarray(x0, dtype=float), lo, hi)
    with np.errstate(all="ignore"):  # overflow is reported below, not warned about
        f, g = problem.cost_grad(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise SolverError("non-finite cost at the initial iterate")
    trace = [f]
    step = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        pg = _project(x - g, lo, hi) - x
        if np.max(np.abs(pg)) < 1e-10:
            converged = True
            it -= 1
            break
        t = step
        for _ in range(max_backtracks):
            x_new = _project(x - t * g, lo, hi)
            dx = x_new - x
            f_new = problem.cost(x_new)
            if not np.isfinite(f_new):
                raise SolverError("non-finite cost during line search")
            if f_new <= f + armijo * float(g @ dx):
                break
            t *= 0.5
        else:
            converged = True  # no decrease available at machine precision
            it -= 1
            break
        if f_new > f:
            converged = True
            it -= 1
            break
        f_new, g_new = problem.cost_grad(x_new)
        s_vec = x_new - x
        y_vec = g_new - g
        sy = float(s_vec @ y_vec)
        step = float(s_vec @ s_vec) / sy if sy > 1e-16 else t * 2.0
        step = min(max(step, 1e-8), 1e3)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        if decrease <= tol * max(1.0, abs(f)):
            converged = True
            break
    return x, f, it, converged, trace


def solve(params: RodParams, cfg: MpcConfig, S0, cloud=None, warm_start=None, bounds=None,
          reference_swapped: bool = False) -> MpcSolution:
    """Minimise the horizon cost over box-bounded input sequences."""
    S0 = np.asarray(S0, dtype=float)
    if not np.all(np.isfinite(S0)):
        raise ValueError("initial state must be finite")
    problem = MpcProblem(params, cfg, S0, cloud, bounds, reference_swapped)
    lo, hi = cfg.lower, cfg.upper
    x0 = np.zeros(3 * cfg.N)
    if warm_start is not None:
        w = _project(np.asarray(warm_start, dtype=float).reshape(-1), lo, hi)
        if problem.cost(w) < problem.cost(x0):
            x0 = w
    x, f, iters, converged, trace = projected_gradient(problem, x0, lo, hi, cfg.max_iters, cfg.tol)
    U = x.reshape(cfg.N, 3)
    return MpcSolution(U, problem.rollout(x), f, iters, converged, trace)


def first_input(sol: MpcSolution) -> np.ndarray:
    return sol.U[0]


def shift_warm_start(U) -> np.ndarray:
    """Drop the applied stage and repeat the last one."""
    U = np.asarray(U, dtype=float)
    return np.vstack([U[1:], U[-1:]])
