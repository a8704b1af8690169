"""Dependency-free SVG plots of a road, a realised path and candidate fans."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .world import Trace

TAG_COLORS = {"rl": "#1f77b4", "backup": "#d62728", "buffer": "#9467bd", None: "#555555"}
CANDIDATE_COLORS = {"chosen": "#2ca02c", "ok": "#7fbf7f", "illegal": "#ff9896", "unsafe": "#c7c7c7"}


class _Canvas:
    def __init__(self, x_min: float, x_max: float, road_width: float, scale: float,
                 margin: float = 30.0):
        self.x_min = x_min
        self.scale = scale
        self.margin = margin
        self.width = (x_max - x_min) * scale + 2 * margin
        self.height = road_width * scale * 4 + 2 * margin
        # lateral axis is stretched so lane changes stay visible
        self.y_scale = scale * 4
        self.items: list[str] = []

    def px(self, x: float, y: float) -> tuple[float, float]:
        return (self.margin + (x - self.x_min) * self.scale, self.margin + y * self.y_scale)

    def line(self, x0, y0, x1, y1, color, width=1.0, dash=None):
        a, b = self.px(x0, y0), self.px(x1, y1)
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<line x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" y2="{b[1]:.2f}" '
                          f'stroke="{color}" stroke-width="{width}"{d}/>')

    def polyline(self, pts, color, width=1.5, opacity=1.0):
        if len(pts) < 2:
            return
        coords = " ".join("{:.2f},{:.2f}".format(*self.px(x, y)) for x, y in pts)
        self.items.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}" stroke-opacity="{opacity}"/>')

    def rect(self, x, y, w, h, color, opacity=1.0):
        a = self.px(x, y)
        self.items.append(f'<rect x="{a[0]:.2f}" y="{a[1]:.2f}" width="{w * self.scale:.2f}" '
                          f'height="{h * self.y_scale:.2f}" fill="{color}" fill-opacity="{opacity}"/>')

    def text(self, x, y, s, size=10):
        a = self.px(x, y)
        self.items.append(f'<text x="{a[0]:.2f}" y="{a[1]:.2f}" font-size="{size}" '
                          f'font-family="sans-serif">{escape(s)}</text>')

    def svg(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width:.0f}" '
                f'height="{self.height:.0f}" viewBox="0 0 {self.width:.0f} {self.height:.0f}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *self.items,
                          "</svg>"]) + "\n"


def _candidate_status(c, chosen_target) -> str:
    if c.safe is False:
        return "unsafe"
    if c.legal is False:
        return "illegal"
    return "chosen" if tuple(c.target) == tuple(chosen_target or ()) else "ok"


def render_svg(trace: Trace, decisions: Sequence = (), title: str = "",
               scale: float = 4.0) -> str:
    road = trace[0].road
    xs = [s.ego.x for s in trace] + [s.other.x for s in trace]
    for d in decisions:
        for c in d.candidates or ():
            xs += [s.ego.x for s in c.trace]
    x_min, x_max = min(xs) - 10.0, max(xs) + 10.0
    cv = _Canvas(x_min, x_max, road.width, scale)

    for i, lane in enumerate(road.lanes):
        if lane.special:
            cv.rect(x_min, i * road.lane_width, x_max - x_min, road.lane_width, "#fff3b0")
        elif lane.direction < 0:
            cv.rect(x_min, i * road.lane_width, x_max - x_min, road.lane_width, "#f2f2f2")
    for i in range(road.lane_count + 1):
        edge = i in (0, road.lane_count)
        cv.line(x_min, i * road.lane_width, x_max, i * road.lane_width, "#333333",
                2.0 if edge else 1.0, None if edge else "6,4")
    if road.stop_line is not None:
        cv.line(road.stop_line, 0.0, road.stop_line, road.width, "#000000", 3.0)

    for d in decisions:
        for c in d.candidates or ():
            status = _candidate_status(c, d.target)
            cv.polyline([(s.ego.x, s.ego.y) for s in c.trace], CANDIDATE_COLORS[status], 1.0, 0.8)

    cv.polyline([(s.other.x, s.other.y) for s in trace], "#ff7f0e", 1.5)
    # realised path, one segment per policy tag run
    run, tag = [(trace[0].ego.x, trace[0].ego.y)], trace.tags[1] if len(trace) > 1 else None
    for k in range(1, len(trace)):
        pt = (trace[k].ego.x, trace[k].ego.y)
        if trace.tags[k] != tag:
            cv.polyline(run, TAG_COLORS.get(tag, "#555555"), 2.5)
            run, tag = [run[-1]], trace.tags[k]
        run.append(pt)
    cv.polyline(run, TAG_COLORS.get(tag, "#555555"), 2.5)

    end = trace.last
    for v, color in ((end.ego, "#1f77b4"), (end.other, "#ff7f0e")):
        cv.rect(v.x - v.length / 2, v.y - v.width / 2, v.length, v.width, color, 0.6)
    if title:
        cv.text(x_min + 1.0, -1.0, title, 12)
    legend = "path: rl blue, backup red, buffer purple; other vehicle orange"
    cv.text(x_min + 1.0, road.width + 1.0, legend, 9)
    return cv.svg()


def write_svg(path: str | Path, trace: Trace, decisions: Sequence = (), title: str = "") -> None:
    Path(path).write_text(render_svg(trace, decisions, title), encoding="utf-8")
