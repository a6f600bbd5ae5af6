"""Serialization of trajectories, events, and reports, plus figure rendering.

File contracts: dense numeric series go to CSV, events to JSON Lines, and
summary reports to a single JSON document.  Every file embeds a schema
string in its header or first line.  JSON summaries are byte-deterministic
for identical inputs: keys are sorted, floats use the shortest round-trip
representation, and no timestamps or absolute paths are written.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

TRAJECTORY_SCHEMA = "syzygylab.trajectory.v1"
EVENTS_SCHEMA = "syzygylab.events.v1"
SUMMARY_SCHEMA = "syzygylab.summary.v1"

TRAJECTORY_COLUMNS = ("t", "x1x", "x1y", "x2x", "x2y", "x3x", "x3y",
                      "v1x", "v1y", "v2x", "v2y", "v3x", "v3y",
                      "R", "z", "theta", "phi", "H", "J")


def _plain(value):
    """Recursively convert numpy scalars/arrays and tuples to JSON types."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        f = float(value)
        if math.isnan(f):
            return None
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def write_summary_json(path, payload: dict) -> None:
    """Single-document JSON report; deterministic bytes for equal payloads."""
    doc = {"schema": SUMMARY_SCHEMA}
    doc.update(_plain(payload))
    text = json.dumps(doc, sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_trajectory_csv(path, series) -> None:
    """Dense trajectory samples as CSV with a schema comment line."""
    rows = np.column_stack([
        series.t,
        series.pos[:, 0, 0], series.pos[:, 0, 1],
        series.pos[:, 1, 0], series.pos[:, 1, 1],
        series.pos[:, 2, 0], series.pos[:, 2, 1],
        series.vel[:, 0, 0], series.vel[:, 0, 1],
        series.vel[:, 1, 0], series.vel[:, 1, 1],
        series.vel[:, 2, 0], series.vel[:, 2, 1],
        series.R, series.z, series.theta, series.phi, series.H, series.J,
    ])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={TRAJECTORY_SCHEMA}\n")
        fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_events_jsonl(path, events) -> None:
    """Event log as JSON Lines; first line carries the schema."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": EVENTS_SCHEMA}) + "\n")
        for e in events:
            rec = {"t": float(e.t), "kind": e.kind}
            symbol = getattr(e, "symbol", None)
            if symbol is not None:
                rec["symbol"] = int(symbol)
            pair = getattr(e, "pair", None)
            if pair is not None:
                rec["pair"] = list(pair)
            direction = getattr(e, "crossing_direction",
                                getattr(e, "direction", None))
            if direction is not None:
                rec["direction"] = int(direction)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_events_jsonl(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = json.loads(lines[0])
    if head.get("schema") != EVENTS_SCHEMA:
        raise ValueError(f"unexpected events schema: {head}")
    return [json.loads(ln) for ln in lines[1:] if ln.strip()]


# ---------------------------------------------------------------------------
# figures


def _save(fig, path):
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def trajectory_figure(series, events, path) -> None:
    """Body paths in the plane plus the height timeline with events."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    colors = ("tab:red", "tab:green", "tab:blue")
    for b in range(3):
        ax1.plot(series.pos[:, b, 0], series.pos[:, b, 1],
                 color=colors[b], lw=0.8, label=f"body {b + 1}")
        ax1.scatter(series.pos[-1, b, 0], series.pos[-1, b, 1],
                    color=colors[b], s=25)
    ax1.set_xlabel("x")
    ax1.set_ylabel("y")
    ax1.set_aspect("equal", adjustable="datalim")
    ax1.legend(fontsize=8)
    ax1.set_title("paths")

    ax2.plot(series.t, series.z, lw=0.9)
    ax2.axhline(0.0, color="k", lw=0.5)
    for e in events:
        if e.kind in ("syzygy", "binary_collision"):
            ax2.axvline(e.t, color="tab:orange", lw=0.4, alpha=0.6)
    ax2.set_xlabel("t")
    ax2.set_ylabel("height z")
    ax2.set_title("collinearity height")
    _save(fig, path)


def sweep_histogram_figure(times, horizon, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    if times:
        ax.hist([abs(t) for t in times], bins=30, color="tab:blue", alpha=0.8)
    ax.set_xlabel("first syzygy time")
    ax.set_ylabel("count")
    ax.set_title(f"first syzygy within horizon {horizon}")
    _save(fig, path)


def lagrange_figure(series, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(series.t, series.R)
    ax1.set_xlabel("t")
    ax1.set_ylabel("size R")
    ax1.set_title("homothetic collapse")
    ax2.plot(series.t, series.z)
    ax2.set_xlabel("t")
    ax2.set_ylabel("height z")
    ax2.set_ylim(-1.05, 1.05)
    ax2.set_title("height stays at the pole")
    _save(fig, path)


def bounds_figure(series, report, total_mass, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    ax1.plot(series.t, series.rho, lw=0.8)
    ax1.axhline(report.rho0, color="tab:red", lw=0.7, ls="--", label="rho0")
    ax1.set_xlabel("t")
    ax1.set_ylabel("outer distance rho")
    ax1.legend(fontsize=8)

    rho_dot = np.gradient(series.rho, series.t)
    rho_ddot = np.gradient(rho_dot, series.t)
    resid = np.abs(rho_ddot + total_mass / series.rho ** 2)
    mask = series.rho >= report.rho0
    mask[:2] = mask[-2:] = False
    if mask.any():
        ax2.loglog(series.rho[mask], resid[mask], ".", ms=2)
    ax2.set_xlabel("rho")
    ax2.set_ylabel("|rho'' + M/rho^2|")
    ax2.set_title(f"residual slope {report.residual_slope:.2f}")
    _save(fig, path)


def excursions_figure(metrics, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    r0 = [m.R0 for m in metrics]
    ax1.plot(r0, [m.length_R0 for m in metrics], "o-")
    ax1.set_xscale("log")
    ax1.set_xlabel("R0")
    ax1.set_ylabel("sigma-length x R0")
    ax1.set_title("excursion length floor")
    ax2.plot(r0, [m.syzygy_count for m in metrics], "o-", label="observed")
    ax2.plot(r0, [m.sturm_floor for m in metrics], "s--", label="floor")
    ax2.set_xscale("log")
    ax2.set_yscale("log")
    ax2.set_xlabel("R0")
    ax2.set_ylabel("syzygy count")
    ax2.legend(fontsize=8)
    _save(fig, path)


def sandwich_figure(verdict, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(verdict.t, verdict.x_minus, label="x-")
    ax1.plot(verdict.t, verdict.x, label="x")
    ax1.plot(verdict.t, verdict.x_plus, label="x+")
    ax1.set_xlabel("t")
    ax1.set_ylabel("position")
    ax1.legend(fontsize=8)
    ax1.set_title("falling sandwich")
    ax2.plot(verdict.t, verdict.v_minus, label="x-'")
    ax2.plot(verdict.t, verdict.v, label="x'")
    ax2.plot(verdict.t, verdict.v_plus, label="x+'")
    ax2.set_xlabel("t")
    ax2.set_ylabel("velocity")
    ax2.legend(fontsize=8)
    _save(fig, path)


def kepler_figure(taus, phis, residual_table, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(taus, phis)
    ax1.set_xlabel("tau")
    ax1.set_ylabel("phi")
    ax1.set_title("unit Kepler fall")
    if residual_table:
        lams = [row["lam"] for row in residual_table]
        res = [row["max_residual"] for row in residual_table]
        ax2.loglog(lams, res, "o")
    ax2.set_xlabel("scale lam")
    ax2.set_ylabel("max |rho'' + c/rho^2| rho^2")
    ax2.set_title("scaling family residuals")
    _save(fig, path)
