"""Scenario files, Monte-Carlo batches, summaries and exports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from rodsim.coordination import Outcome, Schedule, Strategy, TrialConfig, TrialRecord, simulate
from rodsim.dynamics import RodParams
from rodsim.environment import Obstacle, PointCloud, SensorConfig, Workspace, Zone, randomize_scenario
from rodsim.follower import FollowerConfig
from rodsim.mpc import MpcConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# Reconstructed layout: a thin wall the follower end runs into, a small block
# near the approach corridor and a large fixed block on the right.
DEFAULT_OBSTACLES = (
    ((3.8, 6.0), (3.9, 6.0), (3.9, 7.0), (3.8, 7.0)),
    ((5.1, 4.5), (5.1, 5.0), (5.8, 5.0), (5.8, 4.5)),
    ((6.5, 3.0), (6.5, 6.0), (8.0, 6.0), (8.0, 3.0)),
)
DEFAULT_ZONES = (
    Zone(0, (3.8, 5.5, 4.0, 6.0)),
    Zone(1, (4.7, 4.5, 5.1, 4.7)),
)
DEFAULT_BOUNDS = (0.0, 0.0, 9.0, 9.0)
S0_DEFAULT = (7.5, 0.0, 7.2, 0.0, 0.1, 0.0)

STRATEGY_NUMBER = {Strategy.NO_LEARNING: 1, Strategy.LEARNING_FIXED_ROLES: 2, Strategy.FULL: 3}


class ScenarioError(ValueError):
    """Base for scenario problems; ``path`` names the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path or '<root>'}: {msg}")
        self.path = path


class ScenarioParseError(ScenarioError):
    pass


class ScenarioValidationError(ScenarioError):
    pass


def default_workspace() -> Workspace:
    return Workspace(DEFAULT_BOUNDS, tuple(Obstacle(v) for v in DEFAULT_OBSTACLES))


@dataclass(frozen=True)
class Scenario:
    params: RodParams = field(default_factory=RodParams)
    schedule: Schedule = field(default_factory=Schedule)
    follower: FollowerConfig = field(default_factory=FollowerConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    workspace: Workspace = field(default_factory=default_workspace)
    zones: tuple[Zone, ...] = DEFAULT_ZONES
    S0: tuple[float, ...] = S0_DEFAULT
    d_thr: float = 0.8
    success_radius: float = 0.5
    seed: Optional[int] = None

    def __post_init__(self):
        s0 = tuple(float(x) for x in self.S0)
        if len(s0) != 6 or not all(map(math.isfinite, s0)):
            raise ValueError("S0 needs 6 finite entries")
        object.__setattr__(self, "S0", s0)
        object.__setattr__(self, "zones", tuple(self.zones))
        if not (self.d_thr > 0 and self.success_radius > 0):
            raise ValueError("d_thr and success_radius must be positive")
        for z in self.zones:
            if not 0 <= z.obstacle < len(self.workspace.obstacles):
                raise ValueError(f"zone references missing obstacle {z.obstacle}")
        # the leader predicts with the plant period and the follower's policy
        synced = dataclasses.replace(self.mpc, T_s=self.schedule.T_s,
                                     input_bounds=self.follower.input_bounds, K2=self.follower.K2)
        object.__setattr__(self, "mpc", synced)

    @property
    def S_tar(self) -> tuple[float, ...]:
        return self.mpc.S_tar

    def trial_config(self) -> TrialConfig:
        return TrialConfig(self.schedule, self.follower, self.mpc, self.sensor,
                           self.d_thr, self.success_radius)

    def workspace_for(self, seed: Optional[int]) -> Workspace:
        if seed is None:
            return self.workspace
        return randomize_scenario(self.workspace, self.zones, seed)


# -- JSON <-> Scenario -------------------------------------------------------

def _num(v, path, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioParseError(path, f"expected a number, got {type(v).__name__}")
    if integer and not (isinstance(v, int) or float(v).is_integer()):
        raise ScenarioParseError(path, "expected an integer")
    if not math.isfinite(v):
        raise ScenarioParseError(path, "must be finite")
    return int(v) if integer else float(v)


def _vec(v, path, n=None):
    if not isinstance(v, list):
        raise ScenarioParseError(path, "expected a list")
    if n is not None and len(v) != n:
        raise ScenarioParseError(path, f"expected {n} entries, got {len(v)}")
    return tuple(_num(x, f"{path}[{i}]") for i, x in enumerate(v))


def _obj(v, path, allowed):
    if not isinstance(v, dict):
        raise ScenarioParseError(path, "expected an object")
    for k in v:
        if k not in allowed:
            raise ScenarioParseError(f"{path}.{k}" if path else k, "unknown field")
    return v


def _build(cls, path, **kw):
    try:
        return cls(**kw)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioValidationError(path, str(exc)) from None


_SCALAR = {"num": _num, "int": lambda v, p: _num(v, p, integer=True)}

# section -> (class, {json key: (kind, dataclass field)})
_SECTIONS = {
    "rod": (RodParams, {k: ("num", k) for k in ("m_l", "m_f", "m_r", "l_l", "l_f")}),
    "schedule": (Schedule, {k: ("num", k) for k in ("T_s", "delta", "T")}),
    "follower": (FollowerConfig, {"d_cr": ("num", "d_cr"), "K2": ("num", "K2"),
                                  "input_bounds": (3, "input_bounds")}),
    "mpc": (MpcConfig, {"N": ("int", "N"), "Q_s": (6, "Q_s"), "Q_i": (3, "Q_i"),
                        "S_tar": (6, "S_tar"), "alpha_samples": (None, "alpha_samples"),
                        "d_safe": ("num", "d_safe"), "w_obs": ("num", "w_obs"),
                        "max_iters": ("int", "max_iters"), "tol": ("num", "tol")}),
    "sensor": (SensorConfig, {"range": ("num", "range"),
                              "angular_resolution_deg": ("deg", "angular_resolution")}),
}
_TOP = {"schema_version", "workspace", "zones", "S0", "d_thr", "success_radius", "seed", *_SECTIONS}


def _section(doc, name):
    cls, fields = _SECTIONS[name]
    raw = _obj(doc.get(name, {}), name, fields)
    kw = {}
    for key, val in raw.items():
        kind, attr = fields[key]
        p = f"{name}.{key}"
        if kind in _SCALAR:
            kw[attr] = _SCALAR[kind](val, p)
        elif kind == "deg":
            kw[attr] = math.radians(_num(val, p))
        else:
            kw[attr] = _vec(val, p, kind)
    return _build(cls, name, **kw)


def _workspace(doc):
    raw = _obj(doc.get("workspace", {}), "workspace", {"bounds", "obstacles"})
    bounds = _vec(raw["bounds"], "workspace.bounds", 4) if "bounds" in raw else DEFAULT_BOUNDS
    if "obstacles" not in raw:
        obstacles = tuple(Obstacle(v) for v in DEFAULT_OBSTACLES)
    else:
        if not isinstance(raw["obstacles"], list):
            raise ScenarioParseError("workspace.obstacles", "expected a list")
        obstacles = []
        for i, ob in enumerate(raw["obstacles"]):
            p = f"workspace.obstacles[{i}]"
            if not isinstance(ob, list):
                raise ScenarioParseError(p, "expected a list of [x, y] vertices")
            verts = [_vec(v, f"{p}[{j}]", 2) for j, v in enumerate(ob)]
            obstacles.append(_build(Obstacle, p, vertices=np.array(verts, dtype=float).reshape(-1, 2)))
        obstacles = tuple(obstacles)
    return _build(Workspace, "workspace", bounds=bounds, obstacles=obstacles)


def _zones(doc):
    if "zones" not in doc:
        # default zones only make sense on the default obstacles
        custom = "obstacles" in doc.get("workspace", {})
        return () if custom else DEFAULT_ZONES
    if not isinstance(doc["zones"], list):
        raise ScenarioParseError("zones", "expected a list")
    out = []
    for i, z in enumerate(doc["zones"]):
        p = f"zones[{i}]"
        z = _obj(z, p, {"obstacle", "rect", "anchor"})
        for k in ("obstacle", "rect"):
            if k not in z:
                raise ScenarioParseError(f"{p}.{k}", "missing field")
        out.append(_build(Zone, p, obstacle=_num(z["obstacle"], f"{p}.obstacle", True),
                          rect=_vec(z["rect"], f"{p}.rect", 4),
                          anchor=_num(z.get("anchor", 0), f"{p}.anchor", True)))
    return tuple(out)


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a validated scenario; absent fields take their default values."""
    doc = _obj(doc, "", _TOP)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioParseError("schema_version", f"unsupported version {version!r}")
    kw: dict[str, Any] = {name: _section(doc, name) for name in ("schedule", "follower", "mpc", "sensor")}
    kw["params"] = _section(doc, "rod")
    kw["workspace"] = _workspace(doc)
    kw["zones"] = _zones(doc)
    if "S0" in doc:
        kw["S0"] = _vec(doc["S0"], "S0", 6)
    for k in ("d_thr", "success_radius"):
        if k in doc:
            kw[k] = _num(doc[k], k)
    if doc.get("seed") is not None:
        kw["seed"] = _num(doc["seed"], "seed", integer=True)
    for i, z in enumerate(kw["zones"]):
        if z.obstacle >= len(kw["workspace"].obstacles):
            raise ScenarioValidationError(f"zones[{i}].obstacle", f"no obstacle with index {z.obstacle}")
        if not 0 <= z.anchor < len(kw["workspace"].obstacles[z.obstacle].vertices):
            raise ScenarioValidationError(f"zones[{i}].anchor", "anchor vertex out of range")
    return _build(Scenario, "", **kw)


def scenario_to_dict(sc: Scenario) -> dict:
    out: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    for name, (_, fields) in _SECTIONS.items():
        obj = sc.params if name == "rod" else getattr(sc, name)
        sec = {}
        for key, (kind, attr) in fields.items():
            val = getattr(obj, attr)
            if kind == "deg":
                val = round(math.degrees(val), 12)
            elif not isinstance(kind, str) or kind not in _SCALAR:
                val = [float(x) for x in val]
            sec[key] = val
        out[name] = sec
    out["workspace"] = {
        "bounds": [float(b) for b in sc.workspace.bounds],
        "obstacles": [[[float(x), float(y)] for x, y in ob.vertices] for ob in sc.workspace.obstacles],
    }
    out["zones"] = [{"obstacle": z.obstacle, "rect": [float(r) for r in z.rect], "anchor": z.anchor}
                    for z in sc.zones]
    out["S0"] = list(sc.S0)
    out["d_thr"] = sc.d_thr
    out["success_radius"] = sc.success_radius
    out["seed"] = sc.seed
    return out


def load_scenario(path=None) -> Scenario:
    """Read a scenario JSON file; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("rodsim").joinpath("scenarios/default.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ScenarioParseError("", f"invalid JSON: {exc}") from None
    return scenario_from_dict(doc)


def dump_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")


# -- trials and batches ------------------------------------------------------

def run_trial(sc: Scenario, strategy, seed: Optional[int] = None) -> TrialRecord:
    """One transport attempt; ``seed`` (or the scenario's) randomizes the zoned obstacles."""
    seed = sc.seed if seed is None else seed
    ws = sc.workspace_for(seed)
    return simulate(sc.params, ws, sc.S0, sc.trial_config(), Strategy.parse(strategy))


@dataclass(frozen=True)
class TrialResult:
    strategy: Strategy
    trial: int
    seed: int
    outcome: Outcome
    steps: int


@dataclass(frozen=True)
class StrategyStats:
    n: int
    success: float
    collision: float
    timeout: float
    mean_cft_steps: Optional[float]
    aborted: int = 0


@dataclass
class BatchSummary:
    trials: list[TrialResult]

    def __post_init__(self):
        self.trials = sorted(self.trials, key=lambda r: (STRATEGY_NUMBER[r.strategy], r.trial))

    @property
    def strategies(self) -> list[Strategy]:
        return sorted({r.strategy for r in self.trials}, key=STRATEGY_NUMBER.get)

    def stats(self, strategy) -> StrategyStats:
        strategy = Strategy.parse(strategy)
        rows = [r for r in self.trials if r.strategy is strategy]
        n = len(rows)
        count = {o: sum(r.outcome is o for r in rows) for o in Outcome}
        # an aborted trial neither collided nor reached the target
        failed = count[Outcome.TIMEOUT] + count[Outcome.ABORTED]
        cft = [r.steps for r in rows if r.outcome is not Outcome.COLLISION]
        return StrategyStats(
            n=n,
            success=100.0 * count[Outcome.SUCCESS] / n,
            collision=100.0 * count[Outcome.COLLISION] / n,
            timeout=100.0 * failed / n,
            mean_cft_steps=float(np.mean(cft)) if cft else None,
            aborted=count[Outcome.ABORTED],
        )


def _trial_task(args):
    sc, strategy, trial, seed = args
    rec = run_trial(sc, strategy, seed)
    return TrialResult(strategy, trial, seed, rec.outcome, rec.steps)


def run_batch(sc: Scenario, strategies: Iterable = ("1", "2", "3"), n_trials: int = 100,
              base_seed: int = 0, jobs: int = 1) -> BatchSummary:
    """Paired trials: trial i uses seed ``base_seed + i`` for every strategy."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    strategies = [Strategy.parse(s) for s in strategies]
    tasks = [(sc, s, i, base_seed + i) for s in strategies for i in range(n_trials)]
    if jobs <= 1:
        results = [_trial_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_trial_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return BatchSummary(results)


# -- exports -----------------------------------------------------------------

def _fmt(x: Optional[float], digits: int) -> str:
    return "N/A" if x is None else f"{x:.{digits}f}"


def summary_csv(summary: BatchSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    strategies = summary.strategies
    stats = [summary.stats(s) for s in strategies]
    w.writerow(["feature"] + [f"strategy_{STRATEGY_NUMBER[s]}" for s in strategies])
    w.writerow(["success_pct"] + [_fmt(st.success, 1) for st in stats])
    w.writerow(["collision_pct"] + [_fmt(st.collision, 1) for st in stats])
    w.writerow(["timeout_pct"] + [_fmt(st.timeout, 1) for st in stats])
    w.writerow(["mean_cft_steps"] + [_fmt(st.mean_cft_steps, 2) for st in stats])
    return buf.getvalue()


def results_csv(summary: BatchSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "trial", "seed", "outcome", "steps"])
    for r in summary.trials:
        w.writerow([STRATEGY_NUMBER[r.strategy], r.trial, r.seed, r.outcome.value, r.steps])
    return buf.getvalue()


def read_results_csv(text: str) -> BatchSummary:
    number = {v: k for k, v in STRATEGY_NUMBER.items()}
    rows = csv.DictReader(io.StringIO(text))
    return BatchSummary([TrialResult(number[int(r["strategy"])], int(r["trial"]), int(r["seed"]),
                                     Outcome(r["outcome"]), int(r["steps"])) for r in rows])


def trajectory_jsonl(record: TrialRecord) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in record.trajectory)


def read_trajectory(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def clouds_csv(clouds: dict[str, PointCloud]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "owner", "step", "source"])
    for owner in sorted(clouds):
        c = clouds[owner]
        for (x, y), (source, step) in zip(c.points, c.tags):
            w.writerow([repr(float(x)), repr(float(y)), owner, step, source])
    return buf.getvalue()


_WRITERS = {
    "summary": summary_csv,
    "results": results_csv,
    "trajectory": trajectory_jsonl,
    "clouds": clouds_csv,
}


def export(obj, fmt: str, path) -> Path:
    """Write ``obj`` as one of: summary, results, trajectory, clouds."""
    try:
        writer = _WRITERS[fmt]
    except KeyError:
        raise ValueError(f"unknown export format {fmt!r}") from None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # newline="" keeps the bytes identical across platforms
    with open(path, "w", newline="") as fh:
        fh.write(writer(obj))
    return path


def configure_logging(default: str = "WARNING") -> None:
    level = os.environ.get("RODSIM_LOG", default).upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
