"""Acceptance criteria 1-8. Each test prints one ``criterion N: PASS|FAIL``
line (visible with ``pytest -v``) and then asserts the same verdict."""
import hashlib
import time

import numpy as np
import pytest

import lawshield.rl_agent as rl_mod
from lawshield.audit import audit_trace
from lawshield.law_dsl import evaluate, rebind_constant
from lawshield.rl_agent import QTable, learn_finite_mdp, train
from lawshield.simulator import builtin_law, builtin_scenario, perturb_scenario, run_episode
from lawshield.trace_csv import dumps_trace, loads_trace
from lawshield.trajectory import HermiteSpec, hermite_derivative, hermite_eval
from lawshield.world import GroundingContext, gap_to

from ltl_oracle import ATOMS, bool_registry, depth, positions, random_formula, random_valuation
from test_rl_agent import TOY_GAMMA, toy_step, value_iteration
from test_simulator import THRESHOLDS, turn_back_step


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


class Keep:
    def act(self, world):
        return (0, 0.0)


def test_criterion_1_ltl_oracle_equivalence(report):
    rng = np.random.default_rng(2024)
    ctx = GroundingContext(registry=bool_registry())
    start = time.perf_counter()
    mismatches = n = 0
    while n < 10_000:
        f = random_formula(rng, 4)
        assert depth(f) <= 4
        v = random_valuation(rng, int(rng.integers(1, 7)))
        got = evaluate(f, v, ctx)
        want = positions(f, v)
        mismatches += {i for i in range(len(v)) if got[i]} != want
        n += 1
    elapsed = time.perf_counter() - start
    report(1, mismatches == 0 and elapsed < 60,
           f"{n} formulas over atoms {ATOMS}, {mismatches} mismatches, {elapsed:.1f} s")


def _curve(spec, t):
    h00, h10 = 2 * t**3 - 3 * t**2 + 1, t**3 - 2 * t**2 + t
    h01, h11 = -2 * t**3 + 3 * t**2, t**3 - t**2
    return (h00 * np.asarray(spec.p0) + h10 * np.asarray(spec.m0)
            + h01 * np.asarray(spec.p1) + h11 * np.asarray(spec.m1))


def test_criterion_2_hermite(report):
    rng = np.random.default_rng(7)
    end_err = tan_err = 0.0
    h = 1e-6
    for _ in range(2000):
        p = rng.uniform(-100, 100, (4, 2))
        spec = HermiteSpec(*map(tuple, p))
        end_err = max(end_err, np.abs(hermite_eval(spec, 0.0) - p[0]).max(),
                      np.abs(hermite_eval(spec, 1.0) - p[1]).max())
        for t in (0.0, 0.3, 0.7, 1.0):
            fd = (_curve(spec, t + h) - _curve(spec, t - h)) / (2 * h)
            tan_err = max(tan_err, np.abs(fd - hermite_derivative(spec, t)).max())
        tan_err = max(tan_err, np.abs(hermite_derivative(spec, 0.0) - p[2]).max(),
                      np.abs(hermite_derivative(spec, 1.0) - p[3]).max())
    line = HermiteSpec((0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 0.0))
    ts = np.linspace(0, 1, 1001)
    pts = hermite_eval(line, ts)
    line_err = max(np.abs(pts[:, 0] - ts).max(), np.abs(pts[:, 1]).max())
    ok = end_err < 1e-12 and tan_err < 1e-6 and line_err <= 1e-12
    report(2, ok, f"endpoint {end_err:.1e}, tangent {tan_err:.1e}, straight line {line_err:.1e}")


def test_criterion_3_olympic(report, olympic_table):
    sc = builtin_scenario("olympic")
    start = time.perf_counter()
    free = run_episode(sc, olympic_table, "rl-only")
    shield = run_episode(sc, olympic_table, "shielded")
    elapsed = time.perf_counter() - start
    again = run_episode(sc, olympic_table, "shielded")
    same = dumps_trace(shield.trace) == dumps_trace(again.trace)
    ratio = shield.mean_speed / free.mean_speed
    ok = (free.violations >= 1 and shield.violations == 0 and shield.completed
          and ratio >= 0.8 and same and elapsed < 5.0)
    report(3, ok, f"rl-only {free.violations} violations (first at step {free.first_violation}), "
                  f"shielded {shield.violations}; speed ratio {ratio:.3f}; "
                  f"deterministic={same}; {elapsed:.2f} s")


def test_criterion_4_overtaking_law_adaptation(report, overtaking_table, tmp_path):
    path = tmp_path / "overtaking.qtable"
    overtaking_table.save(path)
    digest = lambda: hashlib.sha256(path.read_bytes()).hexdigest()
    hashes, steps, problems = [digest()], {}, []
    for law_name in sorted(THRESHOLDS):
        table = QTable.load(path)
        r = run_episode(builtin_scenario("overtaking", builtin_law(law_name)), table, "shielded")
        hashes.append(digest())
        k = turn_back_step(r.trace)
        steps[law_name] = k
        if r.violations or r.collision:
            problems.append(f"{law_name}: {r.violations} violations, collision={r.collision}")
            continue
        if k is None:
            problems.append(f"{law_name}: never turned back")
            continue
        s = r.trace[k]
        thr = THRESHOLDS[law_name](s.ego.vx - s.other.vx)
        if not gap_to(s.ego, s.other) > thr:
            problems.append(f"{law_name}: gap {gap_to(s.ego, s.other):.2f} <= {thr:.2f}")
    differ = len(set(steps.values())) > 1
    ok = not problems and differ and len(set(hashes)) == 1
    report(4, ok, f"turn-back steps {steps}; one table hash={len(set(hashes)) == 1}"
                  + (f"; {problems}" if problems else ""))


def test_criterion_5_shield_soundness(report, olympic_table, overtaking_table):
    totals = {}
    for name, table in (("olympic", olympic_table), ("overtaking", overtaking_table)):
        v = c = 0
        for seed in range(100):
            r = run_episode(perturb_scenario(builtin_scenario(name), seed), table, "shielded")
            v += r.violations
            c += r.collision
        totals[name] = (v, c)
    ok = all(v == 0 and c == 0 for v, c in totals.values())
    report(5, ok, "100 perturbations each, (violations, collisions): " + str(totals))


def test_criterion_6_buffer_semantics(report):
    sc = builtin_scenario("red_light_hold")
    r = run_episode(sc, Keep(), "shielded")
    logged = loads_trace(dumps_trace(r.trace, r.audit.step_ok, decisions=r.decisions))
    buffer_steps = sum(t == "buffer" for t in logged.trace.tags)
    independent = audit_trace(sc.law, r.trace).violations
    ok = buffer_steps > 0 and r.violations == 0 and independent == 0
    report(6, ok, f"tags {r.tag_counts()}, buffer rows in CSV {buffer_steps}, "
                  f"audit violations {r.violations}")


def test_criterion_7_tabular_q(report):
    q = learn_finite_mdp(toy_step, 2, 2, 50_000, alpha=0.1, gamma=TOY_GAMMA, seed=0)
    err = float(np.abs(q - value_iteration()).max())
    q2 = learn_finite_mdp(toy_step, 2, 2, 50_000, alpha=0.1, gamma=TOY_GAMMA, seed=0)
    sc = builtin_scenario("olympic")
    a, b = train(sc, 500, seed=42).dumps(), train(sc, 500, seed=42).dumps()
    ok = err < 1e-3 and q.tobytes() == q2.tobytes() and a == b
    report(7, ok, f"toy MDP max error {err:.1e}; byte-exact repeat={a == b}")


def test_criterion_8_hot_swap(report, overtaking_table, monkeypatch):
    def no_training(*a, **k):
        raise AssertionError("training was invoked")
    monkeypatch.setattr(rl_mod, "train", no_training)
    monkeypatch.setattr(rl_mod.TrainingEnv, "step", no_training)
    before = overtaking_table.dumps()
    start = time.perf_counter()
    law = rebind_constant(builtin_law("overtake_fixed"), "d_min", 20)
    r = run_episode(builtin_scenario("overtaking", law), overtaking_table, "shielded")
    elapsed = time.perf_counter() - start
    k = turn_back_step(r.trace)
    gap = None if k is None else gap_to(r.trace[k].ego, r.trace[k].other)
    ok = (elapsed < 5.0 and r.violations == 0 and overtaking_table.dumps() == before
          and (k is None or gap > 20))
    report(8, ok, f"d_min 12 -> 20 re-run in {elapsed:.2f} s, no training, "
                  f"turn-back step {k} gap {gap if gap is None else round(gap, 2)}")
