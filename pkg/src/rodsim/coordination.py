"""Event-ordered simulation of one transport trial (leader MPC, follower policy, role switches)."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from rodsim.dynamics import (
    RodParams,
    euler_substep,
    flip_wrench,
    follower_position,
    follower_velocity,
    follower_view,
    swap_view,
    TH,
    OM,
    X,
    Y,
)
from rodsim.environment import PointCloud, SensorConfig, Workspace, rod_collides, sense
from rodsim.follower import FollowerConfig, infer_leader_input, reactive_input, select_critical
from rodsim.inference import decode_follower, update_known_obstacles
from rodsim.mpc import MpcConfig, SolverError, first_input, shift_warm_start, solve

log = logging.getLogger(__name__)

AGENTS = ("A", "B")


class Strategy(str, enum.Enum):
    NO_LEARNING = "no_learning"
    LEARNING_FIXED_ROLES = "fixed_roles"
    FULL = "full"

    @property
    def learns(self) -> bool:
        return self is not Strategy.NO_LEARNING

    @property
    def switches(self) -> bool:
        return self is Strategy.FULL

    @classmethod
    def parse(cls, s) -> "Strategy":
        if isinstance(s, cls):
            return s
        aliases = {"1": cls.NO_LEARNING, "2": cls.LEARNING_FIXED_ROLES, "3": cls.FULL,
                   "s1": cls.NO_LEARNING, "s2": cls.LEARNING_FIXED_ROLES, "s3": cls.FULL}
        key = str(s).strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"
    ABORTED = "aborted"


class ConsistencyError(RuntimeError):
    """The two agents reached different role-switch decisions."""


@dataclass(frozen=True)
class Schedule:
    T_s: float = 0.03
    delta: float = 0.02
    T: float = 2.7

    def __post_init__(self):
        if not 0 < self.delta < self.T_s:
            raise ValueError("need 0 < delta < T_s")
        n = self.T / self.T_s
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("task duration must be a positive integer multiple of T_s")

    @property
    def n_periods(self) -> int:
        return int(round(self.T / self.T_s))


@dataclass
class RoleState:
    leader_id: str = "A"
    switch_count: int = 0
    pending_switch: bool = False

    @property
    def follower_id(self) -> str:
        return "B" if self.leader_id == "A" else "A"


def evaluate_switch(R, C, d_thr: float) -> int:
    """1 when a critical obstacle is present and within ``d_thr`` of the follower position."""
    if C is None:
        return 0
    return int(math.hypot(R[0] - C[0], R[1] - C[1]) <= d_thr)


@dataclass
class World:
    """Mutable simulation state; ``state`` is referenced at the current leader's end."""

    params: RodParams  # parameters in agent A's labelling
    state: np.ndarray
    role: RoleState = field(default_factory=RoleState)
    clouds: dict = field(default_factory=lambda: {a: PointCloud() for a in AGENTS})
    u_last: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_prev: np.ndarray = field(default_factory=lambda: np.zeros(3))
    warm_start: Optional[np.ndarray] = None
    t: float = 0.0
    step: int = 0

    @property
    def view_params(self) -> RodParams:
        return self.params if self.role.leader_id == "A" else self.params.swapped()

    def canonical_state(self) -> np.ndarray:
        """State referenced at agent A's end, heading kept unwrapped when A leads."""
        if self.role.leader_id == "A":
            return self.state.copy()
        return swap_view(self.view_params, self.state)

    def positions(self, state=None):
        s = self.state if state is None else state
        return np.array([s[X], s[Y]]), follower_position(self.view_params, s)


def apply_switch(role: RoleState, world: World) -> RoleState:
    """Hand the leader role to the other agent when a switch is pending."""
    if not role.pending_switch:
        return role
    p = world.view_params
    world.state = swap_view(p, world.state)
    # the old leader keeps pushing with its last wrench until it has inferred the new leader's
    world.v_prev = flip_wrench(world.u_last)
    world.u_last = np.zeros(3)
    world.warm_start = None
    new = RoleState(role.follower_id, role.switch_count + 1, False)
    world.role = new
    return new


@dataclass
class PeriodEvents:
    u: np.ndarray
    v: np.ndarray
    critical: Optional[np.ndarray] = None
    inferred: Optional[np.ndarray] = None
    follower_switch: int = 0
    leader_switch: int = 0
    collided: bool = False
    solver_iterations: int = 0
    solver_converged: bool = True


@dataclass
class TrialConfig:
    schedule: Schedule = field(default_factory=Schedule)
    follower: FollowerConfig = field(default_factory=FollowerConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    d_thr: float = 0.8
    success_radius: float = 0.5


@dataclass
class TrialRecord:
    outcome: Outcome
    steps: int
    trajectory: list
    clouds: dict
    switch_count: int = 0
    message: str = ""

    def final_state(self) -> np.ndarray:
        return np.asarray(self.trajectory[-1]["state"])


def _record(world: World, phase: str, u, v, **extra) -> dict:
    rec = {
        "t": round(world.t, 12),
        "step": world.step,
        "phase": phase,
        "leader_id": world.role.leader_id,
        "state": [float(x) for x in world.canonical_state()],
        "u": [float(x) for x in u],
        "v": [float(x) for x in v],
    }
    for k, val in extra.items():
        if val is None:
            continue
        rec[k] = [float(x) for x in val] if isinstance(val, np.ndarray) else val
    return rec


def step_period(world: World, workspace: Workspace, cfg: TrialConfig, strategy: Strategy,
                log_records: Optional[list] = None) -> PeriodEvents:
    """Advance one control period in the fixed event order.

    Order: switch hand-over, sensing, leader solve, sub-step [t, t+delta),
    follower inference and reaction, sub-step [t+delta, t+T_s), leader decoding
    and cloud update, switch decision. Collisions end the period early.
    """
    sched, fcfg = cfg.schedule, cfg.follower
    apply_switch(world.role, world)
    p = world.view_params
    lead, foll = world.role.leader_id, world.role.follower_id
    C_l, C_f = world.clouds[lead], world.clouds[foll]
    k = world.step

    lpos, fpos = world.positions()
    scan_l = sense(workspace, lpos, cfg.sensor)
    scan_f = sense(workspace, fpos, cfg.sensor)
    if scan_l.blocked or scan_f.blocked:
        return PeriodEvents(np.zeros(3), world.v_prev, collided=True)
    update_known_obstacles(C_l, scan_l.points, None, step=k, copy=False, source="sensed_leader")
    C_f.add(scan_f.points, source="sensed_follower", step=k)

    # leader at t
    sol = solve(p, cfg.mpc, world.state, C_l, world.warm_start, bounds=workspace.bounds,
                reference_swapped=(lead != "A"))
    u = first_input(sol).copy()
    world.warm_start = shift_warm_start(sol.U)
    ev = PeriodEvents(u, world.v_prev.copy(), solver_iterations=sol.iterations,
                      solver_converged=sol.converged)

    # plant over [t, t+delta) with the follower's held input
    S_t = world.state
    S_d = euler_substep(p, S_t, u, world.v_prev, sched.delta)
    world.state, world.t = S_d, world.t + sched.delta
    if log_records is not None:
        log_records.append(_record(world, "delta", u, world.v_prev))
    if rod_collides(workspace, *world.positions()):
        ev.collided = True
        return ev

    # follower at t+delta: own measurements only
    def measure(S):
        return (follower_position(p, S), follower_velocity(p, S), S[TH], S[OM])

    R_t = measure(S_t)
    R_d = measure(S_d)
    Sf_t = follower_view(p, *R_t)
    Sf_d = follower_view(p, *R_d)
    u_hat = infer_leader_input(p, Sf_t, Sf_d, world.v_prev, sched.delta)
    crit = select_critical(C_f, R_d[0], R_d[1], Sf_d[[X, Y]], fcfg)
    v = reactive_input(u_hat, crit, fcfg)
    ev.v = v
    ev.critical = None if crit is None else crit.point
    ev.follower_switch = evaluate_switch(R_d[0], ev.critical, cfg.d_thr)

    # plant over [t+delta, t+T_s)
    window = sched.T_s - sched.delta
    S_end = euler_substep(p, S_d, u, v, window)
    world.state, world.t = S_end, world.t + window
    world.step = k + 1
    world.u_last, world.v_prev = u, v

    # leader decodes the follower's reaction
    dec = decode_follower(p, fcfg, S_d, S_end, u, window)
    if dec.obstacle is not None:
        ev.inferred = dec.obstacle.point
        if strategy.learns:
            update_known_obstacles(C_l, None, dec.obstacle.point, step=k, copy=False)
    R_hat = follower_position(p, S_d)
    ev.leader_switch = evaluate_switch(R_hat, ev.inferred, cfg.d_thr)

    switch = False
    if strategy.switches:
        if ev.leader_switch != ev.follower_switch:
            raise ConsistencyError(
                f"switch disagreement at step {k}: leader={ev.leader_switch} follower={ev.follower_switch}")
        if ev.leader_switch:
            world.role.pending_switch = True
            switch = True
    if log_records is not None:
        log_records.append(_record(world, "end", u, v, inferred_point=ev.inferred,
                                   switch=switch or None))
    if rod_collides(workspace, *world.positions()):
        ev.collided = True
    return ev


def initial_leader_position(world: World) -> np.ndarray:
    s = world.canonical_state()
    return np.array([s[X], s[Y]])


def classify(trajectory, workspace: Workspace, target, success_radius: float, T_steps: int,
             params: RodParams = RodParams()) -> tuple[Outcome, int]:
    """Outcome of a logged trajectory of agent-A-referenced states."""
    target = np.asarray(target, dtype=float)
    for rec in trajectory:
        s = np.asarray(rec["state"], dtype=float)
        lead = s[[X, Y]]
        if rod_collides(workspace, lead, follower_position(params, s)):
            return Outcome.COLLISION, rec["step"]
        if rec["phase"] == "end" and np.hypot(*(lead - target)) <= success_radius:
            return Outcome.SUCCESS, rec["step"]
    last = trajectory[-1]["step"] if trajectory else 0
    return Outcome.TIMEOUT, min(last, T_steps)


def simulate(params: RodParams, workspace: Workspace, S0, cfg: TrialConfig,
             strategy: Strategy) -> TrialRecord:
    """Run periods until success, collision or the task duration elapses."""
    strategy = Strategy.parse(strategy)
    world = World(params, np.asarray(S0, dtype=float).copy())
    records = [_record(world, "init", np.zeros(3), np.zeros(3))]
    target = np.asarray(cfg.mpc.S_tar, dtype=float)[[X, Y]]

    def done(outcome, msg=""):
        return TrialRecord(outcome, world.step, records, world.clouds, world.role.switch_count, msg)

    if rod_collides(workspace, *world.positions()):
        return done(Outcome.COLLISION)
    for _ in range(cfg.schedule.n_periods):
        try:
            ev = step_period(world, workspace, cfg, strategy, records)
        except SolverError as exc:
            log.error("solver failure at step %d: %s", world.step, exc)
            return done(Outcome.ABORTED, str(exc))
        if ev.collided:
            return done(Outcome.COLLISION)
        if np.hypot(*(initial_leader_position(world) - target)) <= cfg.success_radius:
            return done(Outcome.SUCCESS)
    return done(Outcome.TIMEOUT)
