"""Schedule CSV, result JSON and Gantt SVG output."""

from __future__ import annotations

import csv
import io
import json
from xml.sax.saxutils import escape

import numpy as np

from .instance import Instance, Schedule, derive_switches, evaluate_objective

WINDOW_COLORS = ("#3b6fb6", "#3c9a4a", "#c8423b", "#8a5ab5", "#d9902f", "#5a5a5a")


def segments(inst: Instance, x) -> list:
    """Maximal runs (port, first period, last period, battery), all 1-based."""
    x = np.asarray(x)
    out = []
    for k in range(inst.num_ports):
        cur, start = -1, 0
        for t in range(inst.num_periods + 1):
            on = np.flatnonzero(x[:, k, t]) if t < inst.num_periods else []
            j = int(on[0]) if len(on) else -1
            if j != cur:
                if cur >= 0:
                    out.append((k + 1, start + 1, t, cur + 1))
                cur, start = j, t
    return out


def schedule_to_csv(inst: Instance, sched: Schedule) -> str:
    ov = evaluate_objective(inst, sched)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["port", "start_period", "end_period", "battery"])
    w.writerows(segments(inst, sched.x))
    w.writerow(["summary", f"{ov.electricity_cost:.6f}", ov.switch_count, f"{ov.scalarized:.6f}"])
    return buf.getvalue()


def schedule_from_csv(inst: Instance, text: str) -> Schedule:
    """Rebuild x from segment rows; y is the minimal switch pattern for it."""
    x = np.zeros(inst.x_shape, dtype=np.int8)
    rows = csv.reader(io.StringIO(text))
    header = next(rows)
    if header[:4] != ["port", "start_period", "end_period", "battery"]:
        raise ValueError("not a schedule CSV")
    for row in rows:
        if not row or row[0] == "summary":
            continue
        k, a, b, j = (int(v) for v in row[:4])
        x[j - 1, k - 1, a - 1:b] = 1
    return Schedule(x, derive_switches(inst, x))


def gantt_svg(inst: Instance, sched: Schedule, cell: int = 28, row: int = 22) -> str:
    """One row per port, one rectangle per charging run, coloured by demand window."""
    segs = segments(inst, sched.x)
    ov = evaluate_objective(inst, sched)
    left, top = 60, 50
    width = left + cell * inst.num_periods + 20
    height = top + row * inst.num_ports + 30
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="10">',
             f'<text x="{left}" y="14">electricity cost {ov.electricity_cost:.2f}, '
             f'switchings {ov.switch_count}</text>']
    for t, c in enumerate(inst.price):
        parts.append(f'<text x="{left + cell * t + 2}" y="{top - 8}">{c:g}</text>')
    for k in range(inst.num_ports):
        y0 = top + row * k
        parts.append(f'<text x="4" y="{y0 + row * 0.7:.1f}">port {k + 1}</text>')
        parts.append(f'<rect x="{left}" y="{y0}" width="{cell * inst.num_periods}" height="{row - 2}" '
                     f'fill="none" stroke="#ccc"/>')
    for k, a, b, j in segs:
        win = inst.battery_window[j - 1]
        color = WINDOW_COLORS[(win - 1) % len(WINDOW_COLORS)]
        x0 = left + cell * (a - 1)
        y0 = top + row * (k - 1)
        parts.append(f'<rect class="segment window-{win}" x="{x0}" y="{y0}" '
                     f'width="{cell * (b - a + 1)}" height="{row - 2}" fill="{color}">'
                     f'<title>{escape(f"battery {j}, periods {a}-{b}")}</title></rect>')
        parts.append(f'<text x="{x0 + 3}" y="{y0 + row * 0.65:.1f}" fill="white">{j}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def summary_json(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True)
