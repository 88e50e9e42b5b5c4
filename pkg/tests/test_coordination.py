import numpy as np
import pytest

from rodsim.coordination import (
    ConsistencyError,
    Outcome,
    RoleState,
    Schedule,
    Strategy,
    TrialConfig,
    World,
    apply_switch,
    classify,
    evaluate_switch,
    simulate,
    step_period,
)
from rodsim.dynamics import RodParams, follower_position, swap_view
from rodsim.environment import Obstacle, Workspace
from rodsim.harness import Scenario
from rodsim.mpc import MpcConfig, MpcProblem

P = RodParams()
CFG = TrialConfig()
OPEN = Workspace((0, 0, 9, 9), ())


def square(cx, cy, r=0.05):
    return Obstacle([(cx - r, cy - r), (cx + r, cy - r), (cx + r, cy + r), (cx - r, cy + r)])


@pytest.mark.parametrize("dist,expected", [(0.7, 1), (0.8, 1), (0.9, 0)])
def test_evaluate_switch(dist, expected):
    assert evaluate_switch((0.0, 0.0), (dist, 0.0), 0.8) == expected


def test_evaluate_switch_without_obstacle():
    assert evaluate_switch((0.0, 0.0), None, 0.8) == 0


def test_schedule_validation():
    assert Schedule().n_periods == 90
    for kw in (dict(delta=0.03), dict(delta=0.0), dict(T=2.71)):
        with pytest.raises(ValueError):
            Schedule(**kw)


def test_strategy_flags_and_parsing():
    assert [Strategy.parse(x) for x in ("1", "s2", "full")] == list(Strategy)
    assert [(s.learns, s.switches) for s in Strategy] == [(False, False), (True, False), (True, True)]
    with pytest.raises(ValueError):
        Strategy.parse("4")


def test_apply_switch_without_pending_is_noop():
    w = World(P, np.array([5.0, 0.1, 5.0, 0.2, 0.3, 0.4]))
    before = w.state.copy()
    role = apply_switch(w.role, w)
    assert role.leader_id == "A" and role.switch_count == 0
    np.testing.assert_array_equal(w.state, before)


def test_switch_and_back_restores_configuration():
    P2 = RodParams(m_l=0.05, l_l=0.7, l_f=0.9)
    S = np.array([5.0, 0.1, 5.0, -0.2, 0.3, 0.4])
    w = World(P2, S.copy())
    w.role.pending_switch = True
    apply_switch(w.role, w)
    assert w.role.leader_id == "B" and not w.role.pending_switch
    np.testing.assert_allclose(w.canonical_state(), S, atol=1e-12)
    lead_b, foll_b = w.positions()
    np.testing.assert_allclose(foll_b, S[[0, 2]], atol=1e-12)
    np.testing.assert_allclose(lead_b, follower_position(P2, S), atol=1e-12)
    w.role.pending_switch = True
    apply_switch(w.role, w)
    assert w.role.leader_id == "A" and w.role.switch_count == 2
    np.testing.assert_allclose(w.state, S, atol=1e-12)


def stage_cost(problem, states):
    track, _ = problem._tracking(states, False)
    pen, _ = problem._penalty(states, False)
    return track + pen


def test_cost_is_label_independent():
    # same physical configurations, described from either rod end
    rng = np.random.default_rng(0)
    cfg = MpcConfig()
    P2 = RodParams(m_f=0.05, l_l=0.7, l_f=0.9)
    for _ in range(20):
        S = np.column_stack([rng.uniform(2, 7, 3), rng.normal(size=3), rng.uniform(2, 7, 3),
                             rng.normal(size=3), rng.uniform(-3, 3, 3), rng.normal(size=3)])
        cloud = rng.uniform(0, 9, (30, 2))
        a = stage_cost(MpcProblem(P2, cfg, S[0], cloud, (0, 0, 9, 9)), S)
        Sb = np.array([swap_view(P2, s) for s in S])
        b = stage_cost(MpcProblem(P2.swapped(), cfg, Sb[0], cloud, (0, 0, 9, 9), reference_swapped=True), Sb)
        assert b == pytest.approx(a, rel=1e-9)


def traj(points, phases=None):
    return [{"step": i, "phase": "end", "state": [x, 0.0, y, 0.0, 0.0, 0.0]}
            for i, (x, y) in enumerate(points)]


def test_classify_success():
    path = [(8.0, 8.0)] * 60 + [(3.2, 4.0)]
    assert classify(traj(path), OPEN, (3, 3.95), 0.5, 90) == (Outcome.SUCCESS, 60)


def test_classify_collision():
    ws = Workspace((0, 0, 9, 9), (square(5.0, 5.0, 0.3),))
    path = [(7.0, 7.0)] * 40 + [(5.5, 5.0)] + [(3.0, 3.95)]
    assert classify(traj(path), ws, (3, 3.95), 0.5, 90) == (Outcome.COLLISION, 40)


def test_classify_timeout():
    assert classify(traj([(8.0, 8.0)] * 91), OPEN, (3, 3.95), 0.5, 90) == (Outcome.TIMEOUT, 90)


def test_at_target_in_open_space_stays_put():
    S = np.array([3.0, 0, 3.95, 0, 0, 0])
    w = World(P, S.copy())
    ev = step_period(w, OPEN, CFG, Strategy.FULL)
    assert np.linalg.norm(ev.u) <= 1e-4 and np.linalg.norm(ev.v) <= 1e-4
    np.testing.assert_allclose(w.state, S, atol=1e-6)
    assert w.step == 1 and w.t == pytest.approx(0.03)


def test_follower_only_obstacle_is_inferred_once():
    # the leader at (5, 5) cannot see the block; the follower at (3.4, 5) can
    ws = Workspace((0, 0, 9, 9), (square(2.7, 5.0),))
    w = World(P, np.array([5.0, 0, 5.0, 0, 0, 0]))
    ev = step_period(w, ws, CFG, Strategy.LEARNING_FIXED_ROLES)
    tags = w.clouds["A"].tags
    assert [t for t in tags if t[0] == "inferred"] == [("inferred", 0)]
    assert not any(t[0] == "sensed_leader" for t in tags)
    assert np.linalg.norm(ev.inferred - ev.critical) <= 1e-6
    assert ev.critical in w.clouds["B"]


def test_no_learning_keeps_inference_out_of_the_cloud():
    ws = Workspace((0, 0, 9, 9), (square(2.7, 5.0),))
    w = World(P, np.array([5.0, 0, 5.0, 0, 0, 0]))
    ev = step_period(w, ws, CFG, Strategy.NO_LEARNING)
    assert ev.inferred is not None
    assert len(w.clouds["A"]) == 0


def test_collision_ends_period_early():
    ws = Workspace((0, 0, 9, 9), (square(5.0, 5.6, 0.3),))
    w = World(P, np.array([5.8, 0, 5.0, 30.0, 0, 0]))
    ev = step_period(w, ws, CFG, Strategy.FULL)
    assert ev.collided
    assert w.step == 0  # the second sub-step never ran


def test_strategies_nest_when_follower_meets_nothing():
    runs = [simulate(P, OPEN, Scenario().S0, CFG, s) for s in Strategy]
    assert all(r.outcome is Outcome.SUCCESS for r in runs)
    for r in runs[1:]:
        assert r.trajectory == runs[0].trajectory


def test_determinism():
    ws = Scenario().workspace_for(11)
    a = simulate(P, ws, Scenario().S0, CFG, Strategy.FULL)
    b = simulate(P, ws, Scenario().S0, CFG, Strategy.FULL)
    assert a.trajectory == b.trajectory and a.outcome == b.outcome
    assert a.clouds["A"].tags == b.clouds["A"].tags


@pytest.mark.parametrize("strategy", list(Strategy))
def test_clouds_grow_and_switches_agree(strategy):
    sc = Scenario()
    w = World(P, np.asarray(sc.S0, dtype=float).copy())
    sizes = []
    for _ in range(sc.schedule.n_periods):
        ev = step_period(w, sc.workspace, CFG, strategy)
        sizes.append((len(w.clouds["A"]), len(w.clouds["B"])))
        assert ev.leader_switch == ev.follower_switch
        if ev.collided:
            break
    assert np.all(np.diff(np.array(sizes), axis=0) >= 0)


def test_switch_disagreement_is_guarded(monkeypatch):
    import rodsim.coordination as coordination
    calls = iter([1, 0])
    monkeypatch.setattr(coordination, "evaluate_switch", lambda *a: next(calls))
    w = World(P, np.array([5.0, 0, 5.0, 0, 0, 0]))
    with pytest.raises(ConsistencyError):
        step_period(w, OPEN, CFG, Strategy.FULL)


def test_trajectory_log_schema():
    rec = simulate(P, OPEN, Scenario().S0, CFG, Strategy.FULL)
    first, rest = rec.trajectory[0], rec.trajectory[1:]
    assert first["phase"] == "init"
    assert [r["phase"] for r in rest[:4]] == ["delta", "end", "delta", "end"]
    for r in rest:
        assert {"t", "step", "phase", "leader_id", "state", "u", "v"} <= set(r)
        assert len(r["state"]) == 6 and len(r["u"]) == 3 and len(r["v"]) == 3
