import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lawshield.backup import (BackupPolicy, Candidate, first_unsafe_step, filter_safety,
                              generate_candidates, is_unsafe, sample_targets, select,
                              trajectory_cost)
from lawshield.forecaster import LawForecaster
from lawshield.law_dsl import rebind_constant
from lawshield.simulator import builtin_law, builtin_scenario, predict
from lawshield.world import Trace, WorldState

from conftest import make_road, make_state


def prediction(world, n=31, dt=0.1):
    o = world.other
    return [replace(o, x=o.x + o.vx * k * dt) for k in range(n)]


# -- sampling ------------------------------------------------------------------

def test_middle_lane_spans_three_lanes():
    road = make_road()
    t = sample_targets(make_state(road, ego_lane=1), road)
    assert len(t) == 8
    assert {p for p, _ in t} == {-1, 0, 1}
    assert (0, -1.0) in t


def test_leftmost_lane_refills_in_lane():
    road = make_road()
    t = sample_targets(make_state(road, ego_lane=0), road)
    assert len(t) == 8
    assert all(p >= 0 for p, _ in t)
    assert sum(p == 0 for p, _ in t) == 5


def test_single_lane_road():
    road = make_road(1, special=())
    t = sample_targets(make_state(road, ego_lane=0, other_lane=0), road)
    assert len(t) == 8 and len(set(t)) == 8
    assert all(p == 0 for p, _ in t)


@given(st.integers(1, 5).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n - 1))))
def test_targets_always_include_hard_brake(n_lane):
    n, lane = n_lane
    road = make_road(n, special=())
    t = sample_targets(make_state(road, ego_lane=lane, other_lane=lane), road)
    assert (0, -1.0) in t
    assert len(t) == 8 and len(set(t)) == 8
    assert all(road.has_lane(lane + p) for p, _ in t)


# -- safety ----------------------------------------------------------------------

def min_same_lane_distance(world, target, road, horizon=3.0, dt=0.1):
    """Closed-form constant-acceleration motion of both cars, sampled."""
    v0 = world.ego.vx
    v1 = min(max(v0 + target[1] * 3.0 * horizon, 0.0), math.inf)
    a = (v1 - v0) / horizon
    ts = np.arange(1, int(round(horizon / dt)) + 1) * dt
    ego_x = world.ego.x + v0 * ts + 0.5 * a * ts ** 2
    other_x = world.other.x + world.other.vx * ts
    return float(np.min(np.abs(other_x - ego_x)))


def test_brake_behind_slow_lead_is_safe():
    road = make_road()
    w = make_state(road, ego_vx=10.0, other_x=25.0, other_vx=8.0)
    [c] = generate_candidates(w, [(0, -1.0)], road, prediction(w))
    r_safe = 0.5 * (w.ego.length + w.other.length) + 2.0
    assert min_same_lane_distance(w, (0, -1.0), road) > r_safe
    assert not is_unsafe(c.trace)


def test_driving_through_the_other_car_is_unsafe():
    road = make_road()
    w = make_state(road, ego_vx=15.0, other_x=10.0, other_vx=5.0)
    [c] = generate_candidates(w, [(0, 1.0)], road, prediction(w))
    assert min_same_lane_distance(w, (0, 1.0), road) < 0.5 * (4.5 + 4.5) + 2.0
    assert is_unsafe(c.trace)
    k = first_unsafe_step(c.trace)
    assert k is not None and k > 0


def test_changing_into_the_lead_position_is_unsafe():
    road = make_road()
    # lead sits just ahead in the right lane
    w = make_state(road, ego_lane=1, ego_vx=15.0, other_lane=2, other_x=20.0, other_vx=8.0)
    cands = filter_safety(generate_candidates(w, [(1, 0.2), (0, 0.2)], road, prediction(w)))
    assert [c.safe for c in cands] == [False, True]


def test_neighbouring_lane_is_not_a_conflict():
    road = make_road()
    w = make_state(road, ego_lane=1, ego_vx=10.0, other_lane=2, other_x=0.0, other_vx=10.0)
    [c] = generate_candidates(w, [(0, 0.0)], road, prediction(w))
    assert not is_unsafe(c.trace)


# -- cost and selection -----------------------------------------------------------

def test_cost_of_steady_straight_driving():
    road = make_road()
    w = make_state(road, ego_vx=12.0)
    [c] = generate_candidates(w, [(0, 0.0)], road, prediction(w))
    assert trajectory_cost(c.trace, c.lat_acc, 15.0) == pytest.approx(3.0)


def _copy(c, index):
    return Candidate(index, c.target, c.trace, c.lat_acc, c.safe)


def test_tie_goes_to_earlier_sample():
    road = make_road()
    w = make_state(road, other_x=200.0)
    [c] = filter_safety(generate_candidates(w, [(0, 0.0)], road, prediction(w)))
    a, b = _copy(c, 0), _copy(c, 1)
    assert select([a, b], Trace((w,)), lambda *_: True, 10.0) is a
    assert select([b, a], Trace((w,)), lambda *_: True, 10.0) is b


def test_nothing_admissible_returns_none():
    road = make_road()
    w = make_state(road, other_x=200.0)
    cands = filter_safety(generate_candidates(w, sample_targets(w, road), road, prediction(w)))
    assert select(cands, Trace((w,)), lambda *_: False, 10.0) is None
    assert all(c.legal is False and c.cost is not None for c in cands)


@given(st.floats(0, 20), st.floats(-10, 80), st.floats(0, 20), st.integers(0, 2),
       st.floats(0, 20))
@settings(max_examples=60, deadline=None)
def test_selection_monotone_under_removal(ego_vx, other_x, other_vx, other_lane, v_ref):
    road = make_road()
    w = make_state(road, ego_vx=ego_vx, other_x=other_x, other_vx=other_vx, other_lane=other_lane)
    hist = Trace((w,))
    legal = lambda tr, h: tr.last.ego.vx > 2.0
    cands = filter_safety(generate_candidates(w, sample_targets(w, road), road, prediction(w)))
    best = select(cands, hist, legal, v_ref)
    if best is None:
        return
    for c in cands:
        if c is not best:
            rest = [x for x in cands if x is not c]
            assert select(rest, hist, legal, v_ref) is best
    rest = [x for x in cands if x is not best]
    nxt = select(rest, hist, legal, v_ref)
    ranked = sorted((x for x in rest if x.admissible), key=lambda x: (x.cost, x.index))
    assert nxt is (ranked[0] if ranked else None)


# -- scenario behaviour ------------------------------------------------------------

def _plan(sc, world, law=None):
    law = law or sc.law
    fc = LawForecaster(law, sc.prescribed)
    bp = BackupPolicy(sc.road, sc.v_ref, sc.speed_limit)
    pred = predict(sc.other, world.t, sc.horizon, sc.road)
    return bp.plan(Trace((world,)), pred, fc.check)


def test_olympic_backup_turns_right_when_the_lead_is_close():
    sc = builtin_scenario("olympic")
    lead_x = 20.0
    sc = replace(sc, other=replace(sc.other, x0=lead_x))
    action, trace, cands = _plan(sc, sc.initial_world())
    assert action.p_lat == 1
    assert len(cands) == 8
    left = [c for c in cands if c.target[0] == -1]
    assert left and not any(c.legal for c in left)


def test_overtaking_backup_keeps_straight_when_turn_back_is_illegal():
    sc = builtin_scenario("overtaking")
    action, trace, cands = _plan(sc, sc.initial_world())
    assert action.p_lat == 0
    assert not any(c.legal for c in cands if c.target[0] == 1)


def test_threshold_rebind_changes_legality_without_retraining():
    sc = builtin_scenario("overtaking")
    w0 = sc.initial_world()
    other = replace(w0.other, x=-(13.0 + 4.5), vx=12.0)
    sc = replace(sc, other=replace(sc.other, x0=other.x, speeds=((0.0, 12.0),)))
    w = WorldState(replace(w0.ego, vx=12.0), other, 0.0, w0.road)
    law = builtin_law("overtake_fixed")
    _, _, loose = _plan(sc, w, law)
    _, _, strict = _plan(sc, w, rebind_constant(law, "d_min", 20))
    flags = lambda cs: [c.legal for c in cs if c.target[0] == 1]
    assert any(flags(loose)) and not any(flags(strict))


def test_olympic_shielded_run_hands_over_to_a_right_change(olympic_table):
    from lawshield.simulator import run_episode
    r = run_episode(builtin_scenario("olympic"), olympic_table, "shielded")
    assert any(d.tag == "backup" and d.target[0] == 1 for d in r.decisions)
