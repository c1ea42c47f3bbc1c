"""Machine-readable outputs: trajectory CSV, JSON report, state snapshots.

Formats are deterministic: floats in the CSV carry 17 significant digits in
scientific notation, JSON keys are sorted, and no timestamps are embedded,
so identical configs and seeds produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

CSV_HEADER = "t,E,E_tilde,trace_v,trace_v_delayed,bc_residual,channel_discrepancy"


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def trajectory_csv_text(traj) -> str:
    lines = [CSV_HEADER]
    for s in traj.samples:
        lines.append(",".join(_fmt(v) for v in (
            s.t, s.E, s.E_tilde, s.trace_v, s.trace_v_delayed,
            s.bc_residual, s.channel_discrepancy,
        )))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj, path) -> None:
    Path(path).write_text(trajectory_csv_text(traj), encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def report_json_text(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path) -> None:
    Path(path).write_text(report_json_text(report), encoding="utf-8")


class SnapshotStore:
    """Collects per-sample state snapshots for the optional .npz sidecar."""

    def __init__(self):
        self.t = []
        self.u = []
        self.v = []
        self.w = []

    def __call__(self, state) -> None:
        self.t.append(state.t)
        self.u.append(state.u.copy())
        self.v.append(state.v.copy())
        self.w.append(state.channel.w.copy())

    def save(self, path) -> None:
        np.savez(
            path,
            t=np.asarray(self.t),
            u=np.asarray(self.u),
            v=np.asarray(self.v),
            w=np.asarray(self.w),
        )

    def recompute_energy_max_rel_err(self, traj, mesh, ops, gains, delay) -> float:
        """Max relative gap between recorded E and E recomputed from the
        stored snapshots."""
        from .analysis import energy_parts

        worst = 0.0
        for k, s in enumerate(traj.samples):
            p = energy_parts(self.u[k], self.v[k], self.w[k], self.t[k],
                             mesh, ops, gains, delay)
            e = 0.5 * sum(p.values())
            denom = max(abs(s.E), 1e-300)
            worst = max(worst, abs(e - s.E) / denom)
        return worst
