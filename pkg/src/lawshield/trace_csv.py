"""CSV export and import of realised traces.

One row per step. The core columns are::

    t, ego_x, ego_y, ego_vx, ego_vy, ego_lane, other_x, other_vx, indicator,
    action_lat, action_lon, policy, law_ok

followed by ``other_y``, ``indicator_time``, ``veto_step`` and
``veto_subformula`` (the last two are filled on decision steps whose RL
proposal was vetoed). A leading ``# meta: {...}`` line stores the road, the
vehicle footprints and the prescribed flag so a trace can be re-audited
without its scenario file.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

from .simulator import road_from_dict, road_to_dict
from .world import DT, Indicator, OffRoadError, Trace, VehicleState, WorldState

CORE_COLUMNS = ("t", "ego_x", "ego_y", "ego_vx", "ego_vy", "ego_lane", "other_x", "other_vx",
                "indicator", "action_lat", "action_lon", "policy", "law_ok")
EXTRA_COLUMNS = ("other_y", "indicator_time", "veto_step", "veto_subformula")
COLUMNS = CORE_COLUMNS + EXTRA_COLUMNS
META_PREFIX = "# meta: "
POLICIES = ("rl", "backup", "buffer")


class TraceSchemaError(ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


def _target(action):
    if action is None:
        return None
    if hasattr(action, "target"):
        return action.target
    return tuple(action)


def dumps_trace(trace: Trace, law_ok: Sequence[bool] | None = None, prescribed: bool = False,
                decisions: Sequence = ()) -> str:
    first = trace[0]
    meta = {"road": road_to_dict(first.road), "prescribed": bool(prescribed), "dt": trace.dt,
            "ego": {"length": first.ego.length, "width": first.ego.width},
            "other": {"length": first.other.length, "width": first.other.width}}
    vetoes = {d.step: d for d in decisions if getattr(d, "veto_step", None) is not None}
    buf = io.StringIO()
    buf.write(META_PREFIX + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for i, s in enumerate(trace.states):
        e, o = s.ego, s.other
        tgt = _target(trace.actions[i])
        veto = vetoes.get(i)
        w.writerow([
            _fmt(s.t), _fmt(e.x), _fmt(e.y), _fmt(e.vx), _fmt(e.vy), s.road.lane_at(e.y),
            _fmt(o.x), _fmt(o.vx), e.indicator.value,
            "" if tgt is None else int(tgt[0]), "" if tgt is None else _fmt(tgt[1]),
            trace.tags[i] or "", "" if law_ok is None else int(bool(law_ok[i])),
            _fmt(o.y), _fmt(e.indicator_time),
            "" if veto is None else veto.veto_step, "" if veto is None else veto.veto_subformula,
        ])
    return buf.getvalue()


def write_trace(path: str | Path, trace: Trace, **kwargs) -> None:
    Path(path).write_text(dumps_trace(trace, **kwargs), encoding="utf-8")


class LoadedTrace:
    """A parsed CSV: the rebuilt trace plus the per-row extras."""

    def __init__(self, trace: Trace, prescribed: bool, law_ok: list, veto_steps: list,
                 veto_subformulas: list):
        self.trace = trace
        self.prescribed = prescribed
        self.law_ok = law_ok
        self.veto_steps = veto_steps
        self.veto_subformulas = veto_subformulas


def _float(row: dict, key: str, lineno: int) -> float:
    try:
        return float(row[key])
    except (TypeError, ValueError):
        raise TraceSchemaError(f"line {lineno}: column {key!r} is not a number: {row[key]!r}")


def loads_trace(text: str) -> LoadedTrace:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(META_PREFIX):
        raise TraceSchemaError("missing '# meta:' header line")
    try:
        meta = json.loads(lines[0][len(META_PREFIX):])
        road = road_from_dict(meta["road"])
    except (ValueError, KeyError, TypeError) as exc:
        raise TraceSchemaError(f"bad meta header: {exc}")
    reader = csv.DictReader(lines[1:])
    missing = [c for c in CORE_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise TraceSchemaError(f"missing columns: {', '.join(missing)}")

    ego_dims = meta.get("ego", {})
    other_dims = meta.get("other", {})
    states, actions, tags, law_ok, veto_steps, veto_subs = [], [], [], [], [], []
    for lineno, row in enumerate(reader, start=3):
        y = _float(row, "ego_y", lineno)
        try:
            lane = road.lane_at(y)
        except OffRoadError as exc:
            raise TraceSchemaError(f"line {lineno}: {exc}")
        if str(lane) != row["ego_lane"].strip():
            raise TraceSchemaError(
                f"line {lineno}: ego_lane {row['ego_lane']} disagrees with ego_y={y} (lane {lane})")
        try:
            indicator = Indicator(row["indicator"] or "off")
        except ValueError:
            raise TraceSchemaError(f"line {lineno}: unknown indicator {row['indicator']!r}")
        policy = row["policy"] or None
        if policy is not None and policy not in POLICIES:
            raise TraceSchemaError(f"line {lineno}: unknown policy {policy!r}")
        ind_time = float(row["indicator_time"]) if row.get("indicator_time") else 0.0
        ego = VehicleState(_float(row, "ego_x", lineno), y, _float(row, "ego_vx", lineno),
                           _float(row, "ego_vy", lineno), indicator, ind_time,
                           ego_dims.get("length", 4.5), ego_dims.get("width", 1.8))
        # older exports lack other_y; only collision checks look at it
        oy = float(row["other_y"]) if row.get("other_y") else road.lane_center(0)
        other = VehicleState(_float(row, "other_x", lineno), oy, _float(row, "other_vx", lineno),
                             0.0, length=other_dims.get("length", 4.5),
                             width=other_dims.get("width", 1.8))
        states.append(WorldState(ego, other, _float(row, "t", lineno), road))
        if row["action_lat"] == "":
            actions.append(None)
        else:
            actions.append((int(row["action_lat"]), float(row["action_lon"])))
        tags.append(policy)
        law_ok.append(None if row["law_ok"] == "" else row["law_ok"] == "1")
        veto_steps.append(int(row["veto_step"]) if row.get("veto_step") else None)
        veto_subs.append(row.get("veto_subformula") or None)
    if not states:
        raise TraceSchemaError("trace has no rows")
    trace = Trace(tuple(states), tuple(actions), tuple(tags), float(meta.get("dt", DT)))
    return LoadedTrace(trace, bool(meta.get("prescribed", False)), law_ok, veto_steps, veto_subs)


def read_trace(path: str | Path) -> LoadedTrace:
    return loads_trace(Path(path).read_text(encoding="utf-8"))
