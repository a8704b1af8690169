"""
Writing a law
=============

Laws are short temporal-logic formulas over named road facts. This walks
through parsing one, checking hand-made traces, and reading the error
messages.
"""
from lawshield.law_dsl import LawError, eval_trace, explain, parse_law
from lawshield.world import Lane, RoadMap, Trace, VehicleState, WorldState

road = RoadMap((Lane(special=True), Lane(), Lane()), 3.5)


def drive(lanes):
    """Ego at 10 m/s following one lane index per 0.1 s step."""
    states = []
    for k, lane in enumerate(lanes):
        ego = VehicleState(1.0 * k, road.lane_center(lane), 10.0)
        other = VehicleState(50.0 + 0.8 * k, road.lane_center(1), 8.0)
        states.append(WorldState(ego, other, round(0.1 * k, 9), road))
    return Trace(tuple(states))


# "keep out of the special lane, and once you leave lane 1 do not come back
# within the next two steps"
law = parse_law("""
name: demo
formula: G( !on_special_lane ) & G( (in_lane(1) & X !in_lane(1)) -> X X !in_lane(1) )
""")
ctx = law.context()

for lanes in ([1, 1, 1, 2, 2, 2], [1, 2, 1, 1], [1, 0, 1]):
    verdict = eval_trace(law.formula, drive(lanes), ctx)
    fail = explain(law.formula, drive(lanes), ctx)
    print(lanes, "ok" if verdict else f"violated at step {fail.step}: {fail.subformula}")

# %% mistakes are reported with a position
for bad in ("formula: G( on_special_lane & )", "formula: G( flying_car )",
            "formula: gap_gt(d_min)"):
    try:
        parse_law(bad)
    except LawError as exc:
        print(type(exc).__name__, "-", exc)
