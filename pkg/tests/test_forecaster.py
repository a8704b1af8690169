from dataclasses import replace

import pytest

from lawshield.audit import audit_trace
from lawshield.backup import first_unsafe_step
from lawshield.forecaster import (BACKUP, BUFFER, RL, BufferExhaustedError, LawForecaster,
                                  TrajectoryBuffer, decide, recoverability_check)
from lawshield.simulator import builtin_law, builtin_scenario, predict, run_episode
from lawshield.trajectory import generate
from lawshield.world import Trace, TraceError, WorldState

from conftest import make_state


class Keep:
    def act(self, world):
        return (0, 0.0)


def candidate(world, target, scenario, **kw):
    pred = predict(scenario.other, world.t, scenario.horizon, world.road, scenario.dt)
    return generate(world, target, world.road, pred, scenario.horizon, scenario.dt,
                    scenario.a_max, scenario.speed_limit, **kw)


def olympic():
    sc = builtin_scenario("olympic")
    w = sc.initial_world()
    return sc, w, Trace((w,)), LawForecaster(sc.law)


# -- check -----------------------------------------------------------------

def test_left_change_into_event_lane_is_illegal():
    sc, w, hist, fc = olympic()
    assert not fc.check(candidate(w, (-1, 0.0), sc), hist)
    fail = fc.diagnose(candidate(w, (-1, 0.0), sc), hist)
    assert fail is not None and "on_special_lane" in fail.subformula


def test_lane_keeping_is_legal():
    sc, w, hist, fc = olympic()
    assert fc.check(candidate(w, (0, -1.0), sc), hist)
    assert fc.check(candidate(w, (1, 0.0), sc), hist)


def _overtaking_world(gap):
    sc = builtin_scenario("overtaking")
    w0 = sc.initial_world()
    # ego in the oncoming lane, level speed with the overtaken car
    other = replace(w0.other, x=-(gap + 4.5), vx=12.0)
    ego = replace(w0.ego, vx=12.0)
    sc = replace(sc, other=replace(sc.other, x0=other.x, speeds=((0.0, 12.0),)))
    return sc, WorldState(ego, other, 0.0, w0.road)


@pytest.mark.parametrize("gap, legal", [(11.0, False), (13.0, True)])
def test_turn_back_legality_follows_fixed_threshold(gap, legal):
    sc, w = _overtaking_world(gap)
    fc = LawForecaster(builtin_law("overtake_fixed"))
    assert fc.check(candidate(w, (1, 0.0), sc), Trace((w,))) is legal


def test_check_is_pure():
    sc, w, hist, fc = olympic()
    c = candidate(w, (-1, 0.5), sc)
    first = [fc.check(c, hist) for _ in range(5)]
    assert len(set(first)) == 1
    assert fc.diagnose(c, hist) == fc.diagnose(c, hist)
    assert len(hist) == 1


def test_check_rejects_misaligned_candidate():
    sc, w, hist, fc = olympic()
    later = candidate(w, (0, 0.0), sc)[10]
    stray = Trace((later,))
    with pytest.raises(TraceError):
        fc.check(stray, hist)


# -- recoverability -----------------------------------------------------------

def _ending_with(trace, **ego):
    last = trace.last
    end = replace(last, ego=replace(last.ego, **ego))
    return Trace(trace.states[:-1] + (end,), trace.actions, trace.tags, trace.dt)


def test_recoverability_examples():
    sc, w, _, _ = olympic()
    c = candidate(w, (1, 0.0), sc)
    assert recoverability_check(c, sc.speed_limit)
    assert not recoverability_check(_ending_with(c, vy=1.0), sc.speed_limit)
    assert not recoverability_check(_ending_with(c, vx=sc.speed_limit + 0.5), sc.speed_limit)
    assert not recoverability_check(_ending_with(c, y=c.last.ego.y + 1.0), sc.speed_limit)


# -- decide --------------------------------------------------------------------

def _no_backup(history):
    return None, None, []


def _fixed_backup(trace, action):
    return lambda history: (action, trace, ["dump"])


def test_case_1_legal_rl_is_used_and_buffered():
    sc, w, hist, fc = olympic()
    rl = candidate(w, (1, 0.0), sc)
    buf = TrajectoryBuffer()
    d = decide((1, 0.0), rl, _no_backup, hist, fc, buf, sc.speed_limit)
    assert (d.tag, d.action, d.veto) == (RL, (1, 0.0), None)
    assert buf.trace is rl and buf.index == 0


def test_case_2_illegal_rl_falls_back_to_backup():
    sc, w, hist, fc = olympic()
    rl = candidate(w, (-1, 0.0), sc)
    bk = candidate(w, (1, 0.0), sc, tag="backup")
    buf = TrajectoryBuffer()
    d = decide((-1, 0.0), rl, _fixed_backup(bk, (1, 0.0)), hist, fc, buf, sc.speed_limit)
    assert d.tag == BACKUP and d.action == (1, 0.0)
    assert d.veto.subformula and d.rl_action == (-1, 0.0)
    assert buf.trace is bk


def test_case_3_both_illegal_uses_buffer_remainder():
    sc, w, hist, fc = olympic()
    buf = TrajectoryBuffer()
    ok = candidate(w, (0, -0.4), sc)
    decide((0, -0.4), ok, _no_backup, hist, fc, buf, sc.speed_limit)
    for _ in range(5):
        buf.advance()
    h2 = Trace(ok.states[:6], dt=ok.dt)
    bad = candidate(h2.last, (-1, 0.0), sc)
    d = decide((-1, 0.0), bad, _no_backup, h2, fc, buf, sc.speed_limit)
    assert d.tag == BUFFER and d.action == (0, -0.4)
    assert d.plan.states == ok.states[5:]
    assert buf.trace is ok  # unchanged
    # buffer validity: history plus the remainder is lawful
    assert audit_trace(sc.law, h2.concat(d.plan)).violations == 0


def test_empty_buffer_with_no_legal_plan_fails_loudly():
    sc, w, hist, fc = olympic()
    with pytest.raises(BufferExhaustedError):
        decide((-1, 0.0), candidate(w, (-1, 0.0), sc), _no_backup, hist, fc, TrajectoryBuffer())


def test_unsafe_rl_is_vetoed_even_when_lawful():
    sc = builtin_scenario("olympic")
    road = sc.road
    w = make_state(road, ego_vx=15.0, other_x=12.0, other_vx=8.0)
    sc = replace(sc, other=replace(sc.other, x0=12.0))
    fc = LawForecaster(sc.law)
    rl = candidate(w, (0, 1.0), sc)
    assert fc.check(rl, Trace((w,)))
    brake = candidate(w, (1, -1.0), sc, tag="backup")
    d = decide((0, 1.0), rl, _fixed_backup(brake, (1, -1.0)), Trace((w,)), fc,
               TrajectoryBuffer(), sc.speed_limit, first_unsafe_step)
    assert d.tag == BACKUP
    assert d.veto.subformula == "safety distance"
    assert d.veto.step == first_unsafe_step(rl)


def test_red_light_hold_reaches_the_buffer_and_stays_lawful():
    sc = builtin_scenario("red_light_hold")
    r = run_episode(sc, Keep(), "shielded")
    counts = r.tag_counts()
    assert counts[BUFFER] > 0
    assert r.violations == 0
    assert run_episode(sc, Keep(), "rl-only").violations > 0


# -- system properties -----------------------------------------------------------

@pytest.mark.parametrize("name", ["olympic", "overtaking"])
def test_backup_takeovers_are_timely(name, olympic_table, overtaking_table):
    table = olympic_table if name == "olympic" else overtaking_table
    sc = builtin_scenario(name)
    r = run_episode(sc, table, "shielded", dump_candidates=True)
    seen = 0
    # every hand-over, including one at the first decision, must still
    # leave a lawful continuation
    for rec in r.decisions:
        if rec.tag == BACKUP:
            history = r.trace.prefix(rec.step + 1)
            chosen = [c for c in rec.candidates if c.target == rec.target and c.admissible]
            assert chosen
            joined = history.concat(chosen[0].trace)
            assert audit_trace(sc.law, joined, sc.prescribed).violations == 0
            seen += 1
    assert seen >= 1


def test_buffer_steps_keep_the_prefix_lawful():
    sc = builtin_scenario("red_light_hold")
    r = run_episode(sc, Keep(), "shielded")
    ok = audit_trace(sc.law, r.trace).step_ok
    for k, tag in enumerate(r.tags):
        if tag == BUFFER:
            assert all(ok[:k + 1])
