"""Syzygy classification, symbol sequences, and the sweep experiments.

A syzygy is a collinear instant; its symbol is the index of the body lying
strictly between the other two.  Binary collisions count as syzygies but
carry the colliding pair instead of a symbol (the limit of the middle body
depends on the approach direction).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import MassTriple, PhaseState, conserved
from .errors import AmbiguousSyzygy, NotCollinear
from .propagate import (PropagationOptions, Trajectory,
                        lagrange_homothety, propagate,
                        sample_initial_conditions)
from .shape import SigmaSeries, shape_height, shape_height_and_rate


@dataclass(frozen=True)
class SyzygyEvent:
    """A timestamped collinearity crossing.

    kind 'crossing' carries the middle body in `symbol`; kind
    'binary_collision' carries the colliding `pair`.  crossing_direction is
    the sign of dz/dt at the event (0 for tangential touches).
    """

    t: float
    kind: str
    symbol: int | None = None
    pair: tuple[int, int] | None = None
    crossing_direction: int = 0


@dataclass(frozen=True)
class SyzygySequence:
    events: tuple
    degenerate: bool = False

    def symbols(self) -> list:
        return [e.symbol for e in self.events if e.kind == "crossing"]

    def times(self) -> np.ndarray:
        return np.array([e.t for e in self.events])

    def __len__(self):
        return len(self.events)


def classify_syzygy(state: PhaseState, masses: MassTriple,
                    tol: float = 1e-8,
                    collision_floor: float = 1e-10) -> SyzygyEvent:
    """Name the middle body of a collinear instant.

    The middle body i is the one with (x_j - x_i) . (x_k - x_i) < 0; the
    test is invariant under rotation, translation, and scaling.  Raises
    NotCollinear when |z| exceeds `tol`.
    """
    z = shape_height(state, masses)
    if abs(z) > tol:
        raise NotCollinear(f"height z = {z} exceeds tolerance {tol}")
    pos = [state.position(i) for i in (1, 2, 3)]
    scale = max(np.linalg.norm(pos[a] - pos[b])
                for a in range(3) for b in range(a + 1, 3))
    for (a, b) in ((0, 1), (1, 2), (2, 0)):
        if np.linalg.norm(pos[a] - pos[b]) < max(collision_floor,
                                                 collision_floor * scale):
            return SyzygyEvent(t=state.t, kind="binary_collision",
                               pair=(a + 1, b + 1))
    middles = []
    for i in range(3):
        j, k = [b for b in range(3) if b != i]
        if float((pos[j] - pos[i]) @ (pos[k] - pos[i])) < 0.0:
            middles.append(i + 1)
    if len(middles) != 1:
        raise AmbiguousSyzygy(f"middle-body test returned {middles}")
    _, zdot = shape_height_and_rate(state, masses)
    direction = int(np.sign(zdot)) if abs(zdot) > 1e-12 else 0
    return SyzygyEvent(t=state.t, kind="crossing", symbol=middles[0],
                       crossing_direction=direction)


def syzygy_sequence(trajectory: Trajectory,
                    masses: MassTriple | None = None,
                    tol: float = 1e-6) -> SyzygySequence:
    """Classify every height crossing and collision of a trajectory."""
    masses = masses if masses is not None else trajectory.masses
    if trajectory.degenerate_collinear:
        return SyzygySequence(events=(), degenerate=True)
    out = []
    for ev in trajectory.syzygy_like_events():
        if ev.kind == "binary_collision":
            out.append(SyzygyEvent(t=ev.t, kind="binary_collision",
                                   pair=ev.pair))
        else:
            try:
                se = classify_syzygy(ev.state, masses, tol=tol)
            except NotCollinear:
                continue
            out.append(SyzygyEvent(t=ev.t, kind=se.kind, symbol=se.symbol,
                                   pair=se.pair,
                                   crossing_direction=ev.direction))
    out.sort(key=lambda e: e.t)
    return SyzygySequence(events=tuple(out), degenerate=False)


# ---------------------------------------------------------------------------
# sweep experiment


@dataclass
class SeedResult:
    seed: int | str
    found: bool
    t_first: float | None
    direction: str | None           # 'forward' or 'backward'
    n_events: int
    status: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "found": self.found, "t_first": self.t_first,
            "direction": self.direction, "n_events": self.n_events,
            "status": self.status, "diagnostics": self.diagnostics,
        }


@dataclass
class ExperimentReport:
    masses: tuple
    energy: float
    horizon: float
    results: list

    @property
    def n_success(self) -> int:
        return sum(1 for r in self.results if r.found)

    @property
    def success_rate(self) -> float:
        usable = [r for r in self.results if r.status != "lagrange-exception"]
        return self.n_success / len(usable) if usable else 0.0

    def first_times(self) -> list:
        return [r.t_first for r in self.results if r.found]

    def to_dict(self) -> dict:
        return {
            "masses": list(self.masses),
            "energy": self.energy,
            "horizon": self.horizon,
            "n_seeds": len(self.results),
            "n_success": self.n_success,
            "success_rate": self.success_rate,
            "results": [r.to_dict() for r in self.results],
        }


def _first_syzygy_time(traj: Trajectory) -> float | None:
    evs = traj.syzygy_like_events()
    return min((e.t for e in evs), default=None)


def _bounded_case_consistent(traj: Trajectory, n: int = 400) -> bool:
    """Once z > 0 with dz/dt < 0 (or the mirror), a zero must follow."""
    series = traj.series(n=n)
    z, zd, ts = series.z, series.z_dot, series.t
    for sgn in (+1.0, -1.0):
        idx = np.nonzero((sgn * z > 1e-3) & (sgn * zd < -1e-6))[0]
        if idx.size == 0:
            continue
        i0 = idx[0]
        later = np.nonzero(sgn * z[i0:] <= 0.0)[0]
        crossed = later.size > 0 or any(
            e.t > ts[i0] for e in traj.syzygy_like_events())
        if not crossed:
            return False
    return True


def first_syzygy_experiment(seeds, masses: MassTriple, h: float,
                            opts: PropagationOptions | None = None,
                            scale: float = 1.0,
                            backward_on_timeout: bool = True,
                            inject_lagrange: bool = False,
                            workers: int = 1) -> ExperimentReport:
    """Sample seeded zero-J states at energy h and hunt the first syzygy.

    Each seed is propagated forward; on a timeout the time-reversed state
    is propagated as well (the backward branch of the same solution).
    Timeouts are reported with end-state diagnostics, not raised.
    """
    if not h < 0.0:
        raise ValueError("experiment energy must be negative")
    base = opts if opts is not None else PropagationOptions(
        rel_tol=1e-9, abs_tol=1e-11, horizon=200.0)

    def run_one(seed) -> SeedResult:
        state = sample_initial_conditions(seed, masses, h, scale=scale)
        run_opts = PropagationOptions(
            rel_tol=base.rel_tol, abs_tol=base.abs_tol, horizon=base.horizon,
            lc_switch_radius=base.lc_switch_radius,
            triple_floor=base.triple_floor,
            event_refine_tol=base.event_refine_tol, max_steps=base.max_steps,
            collision_floor=base.collision_floor,
            escape_rho_factor=base.escape_rho_factor,
            escape_check=base.escape_check,
            stop_after_syzygies=base.stop_after_syzygies
            if base.stop_after_syzygies is not None else 1)
        traj = propagate(state, masses, run_opts)
        t1 = _first_syzygy_time(traj)
        if t1 is not None:
            return SeedResult(
                seed=seed, found=True, t_first=float(t1), direction="forward",
                n_events=len(traj.syzygy_like_events()),
                status=traj.status.value,
                diagnostics={"bounded_case_ok": _bounded_case_consistent(traj)})
        if backward_on_timeout:
            back = propagate(state.time_reversed(), masses, run_opts)
            tb = _first_syzygy_time(back)
            if tb is not None:
                return SeedResult(
                    seed=seed, found=True, t_first=-float(tb),
                    direction="backward",
                    n_events=len(back.syzygy_like_events()),
                    status=back.status.value, diagnostics={})
        end = traj.state_at(traj.t_final)
        z, zd = shape_height_and_rate(end, masses)
        return SeedResult(
            seed=seed, found=False, t_first=None, direction=None,
            n_events=0, status=traj.status.value,
            diagnostics={"final_R": conserved(end, masses).R,
                         "final_z": z, "final_zdot": zd})

    seeds = list(seeds)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, seeds))
    else:
        results = [run_one(s) for s in seeds]

    if inject_lagrange:
        state = lagrange_homothety(masses, h)
        traj = propagate(state, masses, base)
        n = len(traj.syzygy_like_events())
        results.append(SeedResult(
            seed="lagrange", found=n > 0, t_first=None, direction=None,
            n_events=n, status="lagrange-exception",
            diagnostics={"trajectory_status": traj.status.value}))

    return ExperimentReport(masses=masses.masses, energy=h,
                            horizon=base.horizon, results=results)


# ---------------------------------------------------------------------------
# bounded-case monotonicity diagnostic


@dataclass(frozen=True)
class MonotonicityReport:
    """How often F = I dz/dt decreases while the height stays positive.

    The product with the true conformal size factor is strictly decreasing
    wherever z > 0; measuring with I instead of the exact factor keeps the
    trend but not the pointwise inequality, so this is a fraction, not a
    certificate.  Violations list (t, F_before, F_after).
    """

    fraction_nonincreasing: float
    n_pairs: int
    n_intervals: int
    violations: tuple


def monotonicity_report(trajectory: Trajectory, z_floor: float = 0.05,
                        n: int = 4000) -> MonotonicityReport:
    series = trajectory.series(n=n)
    F = series.I * series.z_dot
    mask = series.z > z_floor
    slack = 1e-12 * float(np.abs(F).max() + 1.0)
    good = 0
    total = 0
    violations = []
    runs = []
    idx = np.nonzero(mask)[0]
    if idx.size:
        splits = np.nonzero(np.diff(idx) > 1)[0]
        starts = np.concatenate([[idx[0]], idx[splits + 1]])
        stops = np.concatenate([idx[splits], [idx[-1]]])
        runs = list(zip(starts.tolist(), stops.tolist()))
    for a, b in runs:
        if b - a < 2:
            continue
        seg = F[a:b + 1]
        diffs = np.diff(seg)
        total += diffs.size
        ok = diffs <= slack
        good += int(ok.sum())
        for off in np.nonzero(~ok)[0]:
            violations.append((float(series.t[a + off]),
                               float(seg[off]), float(seg[off + 1])))
    frac = good / total if total else 1.0
    return MonotonicityReport(fraction_nonincreasing=frac, n_pairs=total,
                              n_intervals=len(runs),
                              violations=tuple(violations))


# ---------------------------------------------------------------------------
# oscillation counting


@dataclass(frozen=True)
class SturmReport:
    """Outcome of the oscillation-count check on a sigma interval."""

    interval: tuple[float, float]
    omega0: float
    hypothesis_met: bool
    dips: tuple                  # (sigma, omega2) samples below omega0^2
    guaranteed: int
    observed: int
    satisfied: bool
    crossings: tuple


def sturm_zero_check(series: SigmaSeries, omega0: float,
                     interval: tuple[float, float] | None = None
                     ) -> SturmReport:
    """Check the zero-count floor len / (pi / omega0) on a sigma interval.

    The floor holds when the measured oscillator coefficient stays at or
    above omega0^2 where defined; samples below are reported as dips and
    the guarantee is withheld (hypothesis_met False), never asserted.
    """
    if omega0 <= 0.0:
        raise ValueError("omega0 must be positive")
    lo, hi = interval if interval is not None else (
        float(series.sigma[0]), float(series.sigma[-1]))
    mask = (series.sigma >= lo) & (series.sigma <= hi)
    defined = mask & series.omega2_defined()
    dips = []
    if defined.any():
        bad = defined & (series.omega2 < omega0 ** 2)
        dips = list(zip(series.sigma[bad].tolist(),
                        series.omega2[bad].tolist()))
    hypothesis_met = len(dips) == 0
    crossings = series.zero_crossings()
    crossings = crossings[(crossings >= lo) & (crossings <= hi)]
    length = hi - lo
    guaranteed = int(math.floor(length / (math.pi / omega0))) \
        if hypothesis_met else 0
    observed = int(crossings.size)
    return SturmReport(interval=(lo, hi), omega0=omega0,
                       hypothesis_met=hypothesis_met, dips=tuple(dips),
                       guaranteed=guaranteed, observed=observed,
                       satisfied=observed >= guaranteed,
                       crossings=tuple(crossings.tolist()))
