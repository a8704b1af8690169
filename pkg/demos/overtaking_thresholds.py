"""
One agent, three overtaking rules
=================================

After passing a slower car in the oncoming lane, the ego may only return
once the right indicator has been on for 3 s or the gap is big enough.
"Big enough" differs between rulebooks: a fixed 12 m, a speed-dependent
18 - 1.5 dv, or the larger of the two. The same frozen table drives all
three runs; only the law file changes.
"""
import hashlib

from lawshield.law_dsl import rebind_constant
from lawshield.rl_agent import train
from lawshield.simulator import builtin_law, builtin_scenario, run_episode
from lawshield.world import gap_to

table = train(builtin_scenario("overtaking"), 5000, seed=42)
digest = hashlib.sha256(table.dumps().encode()).hexdigest()[:12]
print("table", digest)


def turn_back(trace):
    lanes = [s.road.lane_at(s.ego.y) for s in trace]
    return next(k for k in range(1, len(lanes)) if lanes[k] > lanes[k - 1])


def show(law):
    r = run_episode(builtin_scenario("overtaking", law), table, "shielded")
    k = turn_back(r.trace)
    s = r.trace[k]
    print(f"{law.name:18s} back at t={s.t:4.1f} s  gap {gap_to(s.ego, s.other):5.1f} m  "
          f"dv {s.ego.vx - s.other.vx:+.1f}  violations {r.violations}")


for name in ("overtake_fixed", "overtake_variable", "overtake_mixed"):
    show(builtin_law(name))

# %% a stricter city rewrites one constant; still no retraining
show(rebind_constant(builtin_law("overtake_fixed"), "d_min", 20))
assert hashlib.sha256(table.dumps().encode()).hexdigest()[:12] == digest
