"""Command-line driver: seeded experiments, serialization, and figures.

Subcommands: simulate, theorem-sweep, lagrange, verify-bounds, excursions,
sandwich, kepler.  Every subcommand accepts --config pointing at a JSON
document whose fields mirror the flags; explicit flags override the file.
Exit codes: 0 success, 1 an acceptance-style check failed, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import reporting
from .asymptotics import (MODEL_FALL_TIME, comparison_sandwich,
                          excursion_metrics, far_field_bounds, model_kepler,
                          kepler_scaling_residual, random_kepler_sandwich)
from .dynamics import MassTriple, PhaseState, conserved
from .errors import SyzygyLabError
from .propagate import (PropagationOptions, hierarchical_state,
                        lagrange_collapse_time, lagrange_homothety, propagate)
from .shape import lagrange_height
from .syzygy import first_syzygy_experiment, syzygy_sequence

OUTDIR_ENV = "SYZYGYLAB_OUT"

CONFIG_KEYS = {
    "kind", "masses", "energy", "seeds", "horizon", "rel_tol", "abs_tol",
    "out", "figures", "samples", "min_rate", "rho0", "pair_sep", "rho_start",
    "count", "seed", "r0_list", "tol", "workers", "scale",
}


@dataclass
class ExperimentConfig:
    """Resolved configuration of one CLI run."""

    kind: str
    masses: MassTriple
    energy: float | None
    seeds: list | None
    horizon: float | None
    rel_tol: float | None
    abs_tol: float | None
    out: Path
    figures: bool = True
    extra: dict = field(default_factory=dict)

    def options(self, **overrides) -> PropagationOptions:
        kw = {}
        if self.rel_tol is not None:
            kw["rel_tol"] = self.rel_tol
        if self.abs_tol is not None:
            kw["abs_tol"] = self.abs_tol
        if self.horizon is not None:
            kw["horizon"] = self.horizon
        kw.update(overrides)
        return PropagationOptions(**kw)

    def echo(self) -> dict:
        return {
            "kind": self.kind,
            "masses": list(self.masses.masses),
            "energy": self.energy,
            "seeds": self.seeds,
            "horizon": self.horizon,
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "figures": self.figures,
            **self.extra,
        }


class ConfigError(Exception):
    pass


def _parse_masses(text) -> MassTriple:
    try:
        parts = [float(p) for p in str(text).split(",")] \
            if isinstance(text, str) else [float(p) for p in text]
        if len(parts) != 3:
            raise ValueError
        return MassTriple(*parts)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad masses {text!r}: need three positive reals") \
            from exc


def _parse_seeds(text) -> list[int]:
    if text is None:
        return list(range(100))
    if isinstance(text, list):
        return [int(s) for s in text]
    text = str(text)
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(p) for p in text.split(",") if p != ""]
    except ValueError as exc:
        raise ConfigError(f"bad seed range {text!r}") from exc


def _load_config(path, kind) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "kind" in doc and doc["kind"] != kind:
        raise ConfigError(
            f"config kind {doc['kind']!r} does not match subcommand {kind!r}")
    return doc


def _resolve(args, kind, require_negative_energy=False) -> ExperimentConfig:
    cfg = _load_config(getattr(args, "config", None), kind)

    def pick(name, default=None):
        v = getattr(args, name, None)
        if v is not None:
            return v
        return cfg.get(name, default)

    masses = _parse_masses(pick("masses", "1,1,1"))
    energy = pick("energy")
    energy = float(energy) if energy is not None else None
    if require_negative_energy:
        if energy is None:
            energy = -1.0
        if not energy < 0.0:
            raise ConfigError(f"energy must be negative, got {energy}")
    seeds = _parse_seeds(pick("seeds")) if pick("seeds") is not None else None
    if seeds is not None and not seeds:
        raise ConfigError("seed list is empty")
    out = pick("out") or os.environ.get(OUTDIR_ENV) or "syzygylab-out"
    figures = pick("figures", True)
    if getattr(args, "no_figures", False):
        figures = False
    horizon = pick("horizon")
    return ExperimentConfig(
        kind=kind, masses=masses, energy=energy, seeds=seeds,
        horizon=float(horizon) if horizon is not None else None,
        rel_tol=_opt_float(pick("rel_tol")),
        abs_tol=_opt_float(pick("abs_tol")),
        out=Path(out), figures=bool(figures),
        extra={k: cfg[k] for k in cfg
               if k not in {"kind", "masses", "energy", "seeds", "horizon",
                            "rel_tol", "abs_tol", "out", "figures"}})


def _opt_float(v):
    return float(v) if v is not None else None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="syzygylab",
        description="planar three-body syzygy laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--masses", help="three masses, e.g. 1,1,1")
        sp.add_argument("--config", help="JSON config file; flags override")
        sp.add_argument("--out", help=f"output directory (or ${OUTDIR_ENV})")
        sp.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering")
        sp.add_argument("--rel-tol", dest="rel_tol", type=float)
        sp.add_argument("--abs-tol", dest="abs_tol", type=float)
        sp.add_argument("--horizon", type=float)

    sp = sub.add_parser("simulate", help="one trajectory with events")
    common(sp)
    sp.add_argument("--seed", type=int, help="sampled zero-J initial state")
    sp.add_argument("--energy", type=float)
    sp.add_argument("--scale", type=float, default=1.0)
    sp.add_argument("--lagrange", action="store_true",
                    help="use the homothety initial state")
    sp.add_argument("--state", help="JSON file with positions/velocities")
    sp.add_argument("--samples", type=int, default=2000)

    sp = sub.add_parser("theorem-sweep", help="seeded first-syzygy sweep")
    common(sp)
    sp.add_argument("--energy", type=float)
    sp.add_argument("--seeds", help="e.g. 0..99 or 0,3,17")
    sp.add_argument("--min-rate", dest="min_rate", type=float, default=0.98)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--inject-lagrange", action="store_true")

    sp = sub.add_parser("lagrange", help="the syzygy-free exception check")
    common(sp)
    sp.add_argument("--energy", type=float)

    sp = sub.add_parser("verify-bounds", help="far-field decoupling audits")
    common(sp)
    sp.add_argument("--energy", type=float)
    sp.add_argument("--rho0", type=float, default=12.0)
    sp.add_argument("--pair-sep", dest="pair_sep", type=float, default=0.2)
    sp.add_argument("--rho-start", dest="rho_start", type=float, default=3.0)

    sp = sub.add_parser("excursions", help="oscillation counting on far arcs")
    common(sp)
    sp.add_argument("--energy", type=float)
    sp.add_argument("--r0-list", dest="r0_list", help="e.g. 8,15,30,60")
    sp.add_argument("--pair-sep", dest="pair_sep", type=float, default=0.2)
    sp.add_argument("--rho-start", dest="rho_start", type=float, default=3.0)

    sp = sub.add_parser("sandwich", help="randomized comparison problems")
    common(sp)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-8)

    sp = sub.add_parser("kepler", help="model fall tables and scaling checks")
    common(sp)
    sp.add_argument("--count", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--samples", type=int, default=500)

    return p


def run(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    handler = {
        "simulate": _cmd_simulate,
        "theorem-sweep": _cmd_sweep,
        "lagrange": _cmd_lagrange,
        "verify-bounds": _cmd_bounds,
        "excursions": _cmd_excursions,
        "sandwich": _cmd_sandwich,
        "kepler": _cmd_kepler,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SyzygyLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


def _outdir(cfg: ExperimentConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    cfg = _resolve(args, "simulate")
    if args.state:
        try:
            doc = json.loads(Path(args.state).read_text(encoding="utf-8"))
            state = PhaseState.from_arrays(doc["positions"],
                                           doc["velocities"],
                                           float(doc.get("t", 0.0)))
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad state file {args.state}: {exc}") from exc
    elif args.lagrange:
        energy = cfg.energy if cfg.energy is not None else -1.0
        if not energy < 0:
            raise ConfigError("lagrange initial state needs energy < 0")
        state = lagrange_homothety(cfg.masses, energy)
    elif args.seed is not None:
        energy = cfg.energy if cfg.energy is not None else -1.0
        if not energy < 0:
            raise ConfigError("sampled initial state needs energy < 0")
        from .propagate import sample_initial_conditions
        state = sample_initial_conditions(args.seed, cfg.masses, energy,
                                          scale=args.scale)
    else:
        raise ConfigError("simulate needs --seed, --lagrange, or --state")

    out = _outdir(cfg)
    traj = propagate(state, cfg.masses, cfg.options())
    seq = syzygy_sequence(traj)
    series = traj.series(n=args.samples)
    reporting.write_trajectory_csv(out / "trajectory.csv", series)
    reporting.write_events_jsonl(out / "events.jsonl", seq.events)
    cons = conserved(state, cfg.masses)
    drift = traj.energy_drift_report()
    summary = {
        "config": cfg.echo(),
        "status": traj.status.value,
        "t_final": traj.t_final,
        "degenerate_collinear": traj.degenerate_collinear,
        "n_syzygies": len(seq),
        "symbols": seq.symbols()[:200],
        "initial": {"H": cons.H, "J": cons.J, "R": cons.R},
        "energy_drift_per_100": drift["drift_per_100"],
        "max_passage_jump": drift["max_passage_jump"],
    }
    reporting.write_summary_json(out / "simulate_summary.json", summary)
    if cfg.figures:
        reporting.trajectory_figure(series, traj.events,
                                    out / "trajectory.png")
    print(f"status {traj.status.value}, {len(seq)} syzygies, "
          f"outputs in {out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _resolve(args, "theorem-sweep", require_negative_energy=True)
    seeds = cfg.seeds if cfg.seeds is not None else list(range(100))
    out = _outdir(cfg)
    opts = PropagationOptions(
        rel_tol=cfg.rel_tol if cfg.rel_tol is not None else 1e-9,
        abs_tol=cfg.abs_tol if cfg.abs_tol is not None else 1e-11,
        horizon=cfg.horizon if cfg.horizon is not None else 200.0)
    report = first_syzygy_experiment(
        seeds, cfg.masses, cfg.energy, opts=opts,
        inject_lagrange=args.inject_lagrange, workers=args.workers)
    times = report.first_times()
    hist, edges = np.histogram([abs(t) for t in times], bins=20) \
        if times else (np.array([]), np.array([]))
    summary = {
        "config": cfg.echo(),
        **report.to_dict(),
        "histogram": {"counts": hist.tolist(), "edges": edges.tolist()},
    }
    reporting.write_summary_json(out / "theorem_sweep_summary.json", summary)
    if cfg.figures:
        reporting.sweep_histogram_figure(times, report.horizon,
                                         out / "first_syzygy_hist.png")
    ok = report.success_rate >= args.min_rate
    print(f"{report.n_success}/{len(seeds)} seeds found a syzygy "
          f"(rate {report.success_rate:.3f}, min {args.min_rate}); "
          f"outputs in {out}")
    return 0 if ok else 1


def _cmd_lagrange(args) -> int:
    cfg = _resolve(args, "lagrange", require_negative_energy=True)
    out = _outdir(cfg)
    state = lagrange_homothety(cfg.masses, cfg.energy)
    opts = cfg.options(horizon=cfg.horizon if cfg.horizon is not None
                       else 3.0 * lagrange_collapse_time(cfg.masses,
                                                         cfg.energy))
    traj = propagate(state, cfg.masses, opts)
    seq = syzygy_sequence(traj)
    series = traj.series(n=1200)
    z_ref = lagrange_height(cfg.masses)
    t_closed = lagrange_collapse_time(cfg.masses, cfg.energy)
    t_rel_err = abs(traj.t_final - t_closed) / t_closed
    checks = {
        "no_syzygies": len(seq) == 0,
        "triple_collision": traj.status.value == "TripleCollision",
        "height_stays_at_pole": bool(np.min(series.z) >= z_ref - 1e-8),
        "collapse_time_matches": t_rel_err <= 1e-6,
    }
    summary = {
        "config": cfg.echo(),
        "status": traj.status.value,
        "n_syzygies": len(seq),
        "min_height": float(np.min(series.z)),
        "equilateral_height": z_ref,
        "collapse_time": traj.t_final,
        "collapse_time_closed_form": t_closed,
        "collapse_time_rel_err": t_rel_err,
        "checks": checks,
    }
    reporting.write_summary_json(out / "lagrange_summary.json", summary)
    if cfg.figures:
        reporting.lagrange_figure(series, out / "lagrange.png")
    ok = all(checks.values())
    print(("PASS" if ok else "FAIL")
          + f": homothety exception checks {checks}; outputs in {out}")
    return 0 if ok else 1


def _escape_trajectory(cfg, pair_sep, rho_start):
    energy = cfg.energy if cfg.energy is not None else -1.0
    state = hierarchical_state(cfg.masses, pair_sep=pair_sep, rho=rho_start,
                               total_energy=energy, zero_total_j=True)
    opts = PropagationOptions(
        rel_tol=cfg.rel_tol if cfg.rel_tol is not None else 1e-10,
        abs_tol=cfg.abs_tol if cfg.abs_tol is not None else 1e-12,
        horizon=cfg.horizon if cfg.horizon is not None else 120.0,
        escape_check=False)
    return propagate(state, cfg.masses, opts)


def _cmd_bounds(args) -> int:
    cfg = _resolve(args, "verify-bounds", require_negative_energy=True)
    out = _outdir(cfg)
    traj = _escape_trajectory(cfg, args.pair_sep, args.rho_start)
    report = far_field_bounds(traj, cfg.masses, args.rho0)
    series = traj.series(n=4000)
    H = conserved(traj.initial_state, cfg.masses).H
    checks = {
        "pair_angular_momentum_envelope": report.sup_J12 <= report.J12_envelope,
        "transverse_velocity_envelope":
            report.sup_rho_Vperp <= report.rho_Vperp_envelope + 1e-9,
        "kepler_residual_slope": report.residual_slope <= -3.0 + 0.2,
        "min_distance_bound":
            report.min_distance_product_max <= report.min_distance_bound,
    }
    summary = {
        "config": cfg.echo(),
        "rho0": args.rho0,
        "H": H,
        "sup_J12": report.sup_J12,
        "J12_envelope": report.J12_envelope,
        "sup_rho_Vperp": report.sup_rho_Vperp,
        "rho_Vperp_envelope": report.rho_Vperp_envelope,
        "residual_slope": report.residual_slope,
        "sup_residual_rho3": report.sup_residual_scaled,
        "min_distance_product_max": report.min_distance_product_max,
        "min_distance_bound": report.min_distance_bound,
        "sup_coupling_scaled": report.sup_g_scaled,
        "checks": checks,
    }
    reporting.write_summary_json(out / "bounds_summary.json", summary)
    if cfg.figures:
        reporting.bounds_figure(series, report, cfg.masses.M,
                                out / "bounds.png")
    ok = all(checks.values())
    print(("PASS" if ok else "FAIL") + f": far-field checks {checks}; "
          f"outputs in {out}")
    return 0 if ok else 1


def _cmd_excursions(args) -> int:
    cfg = _resolve(args, "excursions", require_negative_energy=True)
    out = _outdir(cfg)
    traj = _escape_trajectory(cfg, args.pair_sep, args.rho_start)
    if args.r0_list:
        r0s = [float(x) for x in str(args.r0_list).split(",")]
    else:
        series = traj.series(n=2000)
        top = float(series.R.max())
        r0s = list(np.geomspace(6.0, max(top / 4.0, 12.0), 5))
    metrics = [excursion_metrics(traj, cfg.masses, r0) for r0 in r0s]
    rows = [{
        "R0": m.R0, "length": m.length, "length_R0": m.length_R0,
        "omega_min": m.omega_min, "omega_min_over_R0sq": m.omega_min / m.R0 ** 2,
        "syzygy_count": m.syzygy_count, "sturm_floor": m.sturm_floor,
        "count_ok": m.count_ok, "omega_source": m.omega_min_source,
    } for m in metrics]
    with open(out / "excursions.csv", "w", encoding="utf-8") as fh:
        fh.write("# schema=syzygylab.excursions.v1\n")
        cols = list(rows[0].keys())
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if not isinstance(row[c], str)
                              else row[c] for c in cols) + "\n")
    summary = {
        "config": cfg.echo(),
        "rows": rows,
        "min_length_R0": min(r["length_R0"] for r in rows),
        "min_omega_over_R0sq": min(r["omega_min_over_R0sq"] for r in rows),
        "all_counts_above_floor": all(r["count_ok"] for r in rows),
    }
    reporting.write_summary_json(out / "excursions_summary.json", summary)
    if cfg.figures:
        reporting.excursions_figure(metrics, out / "excursions.png")
    ok = summary["all_counts_above_floor"] and summary["min_length_R0"] > 0
    print(("PASS" if ok else "FAIL")
          + f": {len(rows)} excursions, min length*R0 "
          f"{summary['min_length_R0']:.4f}; outputs in {out}")
    return 0 if ok else 1


def _cmd_sandwich(args) -> int:
    cfg = _resolve(args, "sandwich")
    out = _outdir(cfg)
    rng = np.random.default_rng(args.seed)
    verdicts = []
    first = None
    for _ in range(args.count):
        v = comparison_sandwich(random_kepler_sandwich(rng), tol=args.tol)
        if first is None:
            first = v
        verdicts.append(v)
    n_bad = sum(0 if v.ok else 1 for v in verdicts)
    summary = {
        "config": cfg.echo(),
        "count": args.count,
        "tolerance": args.tol,
        "violations": n_bad,
        "max_order_violation": max(v.max_order_violation for v in verdicts),
        "max_derivative_violation":
            max(v.max_derivative_violation for v in verdicts),
    }
    reporting.write_summary_json(out / "sandwich_summary.json", summary)
    if cfg.figures and first is not None:
        reporting.sandwich_figure(first, out / "sandwich.png")
    print(("PASS" if n_bad == 0 else "FAIL")
          + f": {args.count} comparison problems, {n_bad} violations; "
          f"outputs in {out}")
    return 0 if n_bad == 0 else 1


def _cmd_kepler(args) -> int:
    cfg = _resolve(args, "kepler")
    out = _outdir(cfg)
    taus = np.linspace(0.0, MODEL_FALL_TIME, args.samples)
    rows = []
    energy_worst = 0.0
    for tau in taus:
        phi, dphi = model_kepler(float(tau))
        rows.append((float(tau), phi, dphi))
        if math.isfinite(dphi):
            energy_worst = max(energy_worst,
                               abs(0.5 * dphi * dphi - 1.0 / phi + 1.0))
    with open(out / "kepler_fall.csv", "w", encoding="utf-8") as fh:
        fh.write("# schema=syzygylab.kepler.v1\n")
        fh.write("tau,phi,dphi\n")
        for row in rows:
            fh.write(",".join(repr(v) for v in row) + "\n")

    rng = np.random.default_rng(args.seed)
    table = []
    for _ in range(args.count):
        lam = float(rng.uniform(0.5, 100.0))
        c = float(rng.uniform(0.5, 2.0))
        t_star = 5.0
        tf = lam ** 1.5 / math.sqrt(c) * MODEL_FALL_TIME
        ts = np.linspace(t_star - 0.9 * tf, t_star + 0.9 * tf, 21)
        res = kepler_scaling_residual(lam, c, t_star, ts)
        table.append({"lam": lam, "c": c, "max_residual": float(res.max())})
    worst = max(row["max_residual"] for row in table)
    checks = {
        "energy_first_integral": energy_worst <= 1e-12,
        "scaling_residual": worst <= 1e-8,
    }
    summary = {
        "config": cfg.echo(),
        "fall_time": MODEL_FALL_TIME,
        "energy_error_max": energy_worst,
        "scaling_table": table,
        "scaling_residual_max": worst,
        "checks": checks,
    }
    reporting.write_summary_json(out / "kepler_summary.json", summary)
    if cfg.figures:
        reporting.kepler_figure([r[0] for r in rows], [r[1] for r in rows],
                                table, out / "kepler.png")
    ok = all(checks.values())
    print(("PASS" if ok else "FAIL") + f": kepler checks {checks}; "
          f"outputs in {out}")
    return 0 if ok else 1


if __name__ == "__main__":
    main()
