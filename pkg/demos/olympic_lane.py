"""
Event lane: an agent that never saw the rule
============================================

The leftmost lane is closed to ordinary traffic for an event. The agent is
trained only to keep its speed near 15 m/s, so behind a slow car it wants
the empty left lane. The shield reads the lane rule from a text file and
steers around it.
"""
from pathlib import Path

from lawshield.render import write_svg
from lawshield.rl_agent import train
from lawshield.simulator import builtin_scenario, run_episode

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

scenario = builtin_scenario("olympic")
print(scenario.law.dumps())

# about ten seconds
table = train(scenario, 5000, seed=42)
print(len(table), "states visited")

# %% left alone, the agent takes the event lane
free = run_episode(scenario, table, "rl-only")
print("rl-only :", free.violations, "violating steps, first at step", free.first_violation,
      f"mean speed {free.mean_speed:.2f}")

# %% with the shield it overtakes on the right instead
shielded = run_episode(scenario, table, "shielded", dump_candidates=True)
print("shielded:", shielded.violations, "violating steps", f"mean speed {shielded.mean_speed:.2f}")
print("steps per policy:", shielded.tag_counts())

for d in shielded.decisions[:8]:
    note = "" if d.veto_subformula is None else f"  vetoed: {d.veto_subformula}"
    print(f"t={d.t:4.1f}  rl wants {d.rl_target}  ->  {d.tag} {d.target}{note}")

# %% the two runs side by side (blue rl, red backup, fans are the 8 backup samples)
write_svg(out / "olympic_rl_only.svg", free.trace, title="rl-only")
write_svg(out / "olympic_shielded.svg", shielded.trace, shielded.decisions[:12], "shielded")
print("wrote", out / "olympic_shielded.svg")
