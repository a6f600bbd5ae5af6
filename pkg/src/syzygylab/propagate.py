"""Trajectory generation with event detection and collision regularization.

The propagator alternates between two charts:

* a direct chart integrating the twelve Cartesian phase coordinates with an
  adaptive 8th-order Runge-Kutta pair (dense output), and
* a regularized chart for close binary approaches, in which the tight
  pair's relative coordinate zeta is written as w^2 (planar square root)
  and integrated in the fictitious time ds = dt / r.  The pure two-body
  part becomes w'' = (E/2) w, so the chart crosses r = 0 with bounded
  derivatives and analytic continuation through binary collisions is just
  ordinary integration.

Events located on the dense output: height zero crossings (syzygies),
pericenter passages in the regularized chart (binary collisions when the
pericenter distance is below the collision floor), triple-collision
termination, and an escape certificate based on the two-body splitting.
"""

from __future__ import annotations

import bisect
import cmath
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .dynamics import (MassTriple, PhaseState, conserved, energy_split,
                       jacobi_split, wedge)
from .errors import (PropagationFailure, RegularizationBreakdown,
                     SamplingExhausted)
from .shape import lagrange_height, equilateral_state, shape_height_and_rate

_EPS = 1e-13


class TrajectoryStatus(Enum):
    HORIZON_REACHED = "HorizonReached"
    TRIPLE_COLLISION = "TripleCollision"
    ESCAPED = "Escaped"
    FAILED = "Failed"


@dataclass
class PropagationOptions:
    """Tolerances, chart-switch radii, and event-handling knobs.

    lc_switch_radius and triple_floor default to 1e-3 and 1e-8 times the
    initial size R when left as None.  stop_after_syzygies ends the run
    early once that many syzygy-type events have been logged (the status
    then reports the shortened horizon).
    """

    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    horizon: float = 200.0
    lc_switch_radius: float | None = None
    triple_floor: float | None = None
    event_refine_tol: float = 1e-10
    max_steps: int = 2_000_000
    collision_floor: float = 1e-10
    escape_rho_factor: float = 50.0
    escape_check: bool = True
    detect_syzygies: bool = True
    stop_after_syzygies: int | None = None

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "horizon", "event_refine_tol",
                     "collision_floor", "escape_rho_factor"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.lc_switch_radius is not None and \
                not self.lc_switch_radius > self.collision_floor:
            raise ValueError(
                "lc_switch_radius must exceed the collision floor")
        if self.triple_floor is not None and not self.triple_floor > 0:
            raise ValueError("triple_floor must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True)
class TrajectoryEvent:
    """One entry of the trajectory's event log.

    kind is one of 'syzygy', 'binary_collision', 'lc_entry', 'lc_exit',
    'escape', 'triple_collision', 'breakdown'.  For syzygies `direction`
    is the sign of dz/dt at the crossing; for collisions `pair` names the
    colliding bodies.
    """

    t: float
    kind: str
    state: PhaseState | None = None
    direction: int = 0
    pair: tuple[int, int] | None = None
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SegmentAudit:
    chart: str
    t0: float
    t1: float
    H0: float
    H1: float
    J0: float
    J1: float
    flagged: bool

    @property
    def rel_energy_jump(self) -> float:
        scale = max(abs(self.H0), 1e-300)
        return abs(self.H1 - self.H0) / scale


@dataclass
class _Segment:
    chart: str                    # 'direct' or 'lc'
    t0: float
    t1: float
    sol: object                   # OdeSolution (t -> y12 or s -> y10)
    flagged: bool = False
    # regularized-chart extras
    pair: tuple[int, int, int] | None = None
    s0: float = 0.0
    s1: float = 0.0
    s_table: np.ndarray | None = None
    t_table: np.ndarray | None = None
    cm_anchor: tuple | None = None   # (x_cm, v_cm, t_anchor)


@dataclass(frozen=True)
class TrajectorySeries:
    """Vectorized samples of a trajectory and derived quantities."""

    t: np.ndarray
    pos: np.ndarray       # (n, 3, 2)
    vel: np.ndarray       # (n, 3, 2)
    r12: np.ndarray
    r23: np.ndarray
    r31: np.ndarray
    r_min: np.ndarray
    rho: np.ndarray       # outer Jacobi length for the closest pair
    I: np.ndarray
    R: np.ndarray
    U: np.ndarray
    K: np.ndarray
    H: np.ndarray
    J: np.ndarray
    z: np.ndarray
    z_dot: np.ndarray
    theta: np.ndarray
    phi: np.ndarray


@dataclass
class Trajectory:
    """Dense-output solution segments plus an ordered event log."""

    masses: MassTriple
    initial_state: PhaseState
    segments: list
    events: list
    audits: list
    status: TrajectoryStatus
    t0: float
    t_final: float
    degenerate_collinear: bool = False
    diagnostics: dict = field(default_factory=dict)

    def state_at(self, t: float) -> PhaseState:
        seg = self._segment_for(t)
        if seg.chart == "direct":
            y = seg.sol(t)
            return _unpack(y, t)
        return _lc_state_at(seg, t, self.masses)

    def sample(self, ts) -> tuple[np.ndarray, np.ndarray]:
        """Positions and velocities at the given times, shapes (n, 3, 2)."""
        ts = np.asarray(ts, dtype=float)
        pos = np.empty((ts.size, 3, 2))
        vel = np.empty((ts.size, 3, 2))
        for seg, mask in self._segment_masks(ts):
            sub = ts[mask]
            if seg.chart == "direct":
                Y = seg.sol(sub)
                pos[mask] = Y[0:6].T.reshape(-1, 3, 2)
                vel[mask] = Y[6:12].T.reshape(-1, 3, 2)
            else:
                for idx, t in zip(np.nonzero(mask)[0], sub):
                    st = _lc_state_at(seg, t, self.masses)
                    pos[idx] = st.positions()
                    vel[idx] = st.velocities()
        return pos, vel

    def series(self, ts=None, n: int = 2000) -> TrajectorySeries:
        if ts is None:
            ts = np.linspace(self.t0, self.t_final, n)
        ts = np.asarray(ts, dtype=float)
        pos, vel = self.sample(ts)
        return _series_from_arrays(ts, pos, vel, self.masses)

    def events_of_kind(self, *kinds) -> list:
        return [e for e in self.events if e.kind in kinds]

    def syzygy_like_events(self) -> list:
        return self.events_of_kind("syzygy", "binary_collision")

    def energy_drift_report(self) -> dict:
        """Aggregate conservation audit.

        Unflagged direct segments measure the smooth-regime drift rate per
        100 time units; regularized passages report their individual
        relative jumps.
        """
        direct = [a for a in self.audits if a.chart == "direct" and not a.flagged]
        lc = [a for a in self.audits if a.chart == "lc"]
        total_time = sum(a.t1 - a.t0 for a in direct)
        total_jump = sum(abs(a.H1 - a.H0) for a in direct)
        H0 = self.audits[0].H0 if self.audits else math.nan
        rate = (total_jump / max(abs(H0), 1e-300)) / total_time * 100.0 \
            if total_time > 0 else 0.0
        return {
            "H0": H0,
            "direct_time": total_time,
            "drift_per_100": rate,
            "passage_jumps": [a.rel_energy_jump for a in lc],
            "max_passage_jump": max((a.rel_energy_jump for a in lc), default=0.0),
        }

    # -- internals ---------------------------------------------------------

    def _segment_for(self, t: float) -> _Segment:
        if not self.segments:
            raise ValueError("empty trajectory")
        span = self.t_final - self.t0
        lo, hi = self.t0 - 1e-9 * abs(span) - _EPS, self.t_final + 1e-9 * abs(span) + _EPS
        if not (lo <= t <= hi):
            raise ValueError(f"t = {t} outside [{self.t0}, {self.t_final}]")
        ends = [s.t1 for s in self.segments]
        i = bisect.bisect_left(ends, t)
        return self.segments[min(i, len(self.segments) - 1)]

    def _segment_masks(self, ts: np.ndarray):
        filled = np.zeros(ts.shape, dtype=bool)
        for seg in self.segments:
            mask = (~filled) & (ts >= seg.t0 - _EPS) & (ts <= seg.t1 + _EPS)
            if mask.any():
                filled |= mask
                yield seg, mask
        if not filled.all():
            bad = ts[~filled]
            raise ValueError(f"times outside trajectory span: {bad[:3]}...")


# ---------------------------------------------------------------------------
# packing and vectorized series


def _pack(state: PhaseState) -> np.ndarray:
    return np.concatenate([state.x1, state.x2, state.x3,
                           state.v1, state.v2, state.v3])


def _unpack(y: np.ndarray, t: float) -> PhaseState:
    return PhaseState(y[0:2], y[2:4], y[4:6], y[6:8], y[8:10], y[10:12], t)


def _series_from_arrays(ts, pos, vel, masses: MassTriple) -> TrajectorySeries:
    m1, m2, m3 = masses.masses
    M = masses.M
    d12 = pos[:, 1] - pos[:, 0]
    d23 = pos[:, 2] - pos[:, 1]
    d31 = pos[:, 0] - pos[:, 2]
    r12 = np.linalg.norm(d12, axis=1)
    r23 = np.linalg.norm(d23, axis=1)
    r31 = np.linalg.norm(d31, axis=1)
    I = (m1 * m2 * r12 ** 2 + m2 * m3 * r23 ** 2 + m3 * m1 * r31 ** 2) / M
    with np.errstate(divide="ignore"):
        U = m1 * m2 / r12 + m2 * m3 / r23 + m3 * m1 / r31
    K = 0.5 * (m1 * (vel[:, 0] ** 2).sum(1) + m2 * (vel[:, 1] ** 2).sum(1)
               + m3 * (vel[:, 2] ** 2).sum(1))
    x_cm = (m1 * pos[:, 0] + m2 * pos[:, 1] + m3 * pos[:, 2]) / M
    v_cm = (m1 * vel[:, 0] + m2 * vel[:, 1] + m3 * vel[:, 2]) / M
    J = np.zeros(ts.size)
    for m, b in ((m1, 0), (m2, 1), (m3, 2)):
        rx = pos[:, b] - x_cm
        rv = vel[:, b] - v_cm
        J += m * (rx[:, 0] * rv[:, 1] - rx[:, 1] * rv[:, 0])

    # shape coordinates from the (1,2;3) split
    a1, a3 = masses.alpha1, masses.alpha3
    mu1, mu2 = masses.mu1, masses.mu2
    zeta = pos[:, 0] - pos[:, 1]
    zeta_dot = vel[:, 0] - vel[:, 1]
    xi = pos[:, 2] - (mu1 * pos[:, 0] + mu2 * pos[:, 1])
    xi_dot = vel[:, 2] - (mu1 * vel[:, 0] + mu2 * vel[:, 1])
    c = math.sqrt(a1 * a3)
    w3 = c * (xi[:, 0] * zeta[:, 1] - xi[:, 1] * zeta[:, 0])
    w3_dot = c * (xi_dot[:, 0] * zeta[:, 1] - xi_dot[:, 1] * zeta[:, 0]
                  + xi[:, 0] * zeta_dot[:, 1] - xi[:, 1] * zeta_dot[:, 0])
    I_dot = 2 * a1 * (zeta * zeta_dot).sum(1) + 2 * a3 * (xi * xi_dot).sum(1)
    z = 2 * w3 / I
    z_dot = 2 * w3_dot / I - 2 * w3 * I_dot / I ** 2
    w1 = 0.5 * (a1 * r12 ** 2 - a3 * (xi ** 2).sum(1))
    w2 = c * (xi * zeta).sum(1)
    theta = np.arctan2(w2, w1)
    phi = np.arcsin(np.clip(z, -1.0, 1.0))

    # outer Jacobi length for the closest pair at each sample
    dists = np.stack([r12, r23, r31], axis=1)
    amin = np.argmin(dists, axis=1)
    rhos = np.empty((ts.size, 3))
    for col, (i, j, k) in enumerate(((1, 2, 3), (2, 3, 1), (3, 1, 2))):
        mi, mj = masses.mass(i), masses.mass(j)
        cm_ij = (mi * pos[:, i - 1] + mj * pos[:, j - 1]) / (mi + mj)
        rhos[:, col] = np.linalg.norm(pos[:, k - 1] - cm_ij, axis=1)
    rho = np.take_along_axis(rhos, amin[:, None], axis=1)[:, 0]

    return TrajectorySeries(
        t=ts, pos=pos, vel=vel, r12=r12, r23=r23, r31=r31,
        r_min=dists.min(axis=1), rho=rho, I=I, R=np.sqrt(I), U=U, K=K,
        H=K - U, J=J, z=z, z_dot=z_dot, theta=theta, phi=phi)


# ---------------------------------------------------------------------------
# right-hand sides and event closures


def _make_direct_rhs(masses: MassTriple):
    m1, m2, m3 = masses.masses

    def rhs(t, y):
        d12x = y[2] - y[0]
        d12y = y[3] - y[1]
        d13x = y[4] - y[0]
        d13y = y[5] - y[1]
        d23x = y[4] - y[2]
        d23y = y[5] - y[3]
        r12 = math.hypot(d12x, d12y)
        r13 = math.hypot(d13x, d13y)
        r23 = math.hypot(d23x, d23y)
        i12 = 1.0 / (r12 * r12 * r12)
        i13 = 1.0 / (r13 * r13 * r13)
        i23 = 1.0 / (r23 * r23 * r23)
        out = np.empty(12)
        out[0:6] = y[6:12]
        out[6] = m2 * d12x * i12 + m3 * d13x * i13
        out[7] = m2 * d12y * i12 + m3 * d13y * i13
        out[8] = -m1 * d12x * i12 + m3 * d23x * i23
        out[9] = -m1 * d12y * i12 + m3 * d23y * i23
        out[10] = -m1 * d13x * i13 - m2 * d23x * i23
        out[11] = -m1 * d13y * i13 - m2 * d23y * i23
        return out

    return rhs


def _height_from_y(y, masses: MassTriple) -> float:
    a1, a3 = masses.alpha1, masses.alpha3
    mu1, mu2 = masses.mu1, masses.mu2
    zx = y[0] - y[2]
    zy = y[1] - y[3]
    xx = y[4] - (mu1 * y[0] + mu2 * y[2])
    xy = y[5] - (mu1 * y[1] + mu2 * y[3])
    I = a1 * (zx * zx + zy * zy) + a3 * (xx * xx + xy * xy)
    return 2.0 * math.sqrt(a1 * a3) * (xx * zy - xy * zx) / I


def _min_pair_distance_y(y) -> float:
    r12 = math.hypot(y[2] - y[0], y[3] - y[1])
    r13 = math.hypot(y[4] - y[0], y[5] - y[1])
    r23 = math.hypot(y[4] - y[2], y[5] - y[3])
    return min(r12, r23, r13)


def _size_from_y(y, masses: MassTriple) -> float:
    m1, m2, m3 = masses.masses
    r12sq = (y[2] - y[0]) ** 2 + (y[3] - y[1]) ** 2
    r13sq = (y[4] - y[0]) ** 2 + (y[5] - y[1]) ** 2
    r23sq = (y[4] - y[2]) ** 2 + (y[5] - y[3]) ** 2
    return math.sqrt((m1 * m2 * r12sq + m2 * m3 * r23sq + m3 * m1 * r13sq)
                     / (m1 + m2 + m3))


def _rho_min_pair_y(y, masses: MassTriple) -> float:
    r12 = math.hypot(y[2] - y[0], y[3] - y[1])
    r23 = math.hypot(y[4] - y[2], y[5] - y[3])
    r31 = math.hypot(y[0] - y[4], y[1] - y[5])
    trip = ((1, 2, 3), (2, 3, 1), (3, 1, 2))[int(np.argmin([r12, r23, r31]))]
    i, j, k = trip
    mi, mj = masses.mass(i), masses.mass(j)
    xi = y[2 * i - 2:2 * i]
    xj = y[2 * j - 2:2 * j]
    xk = y[2 * k - 2:2 * k]
    cx = (mi * xi[0] + mj * xj[0]) / (mi + mj)
    cy = (mi * xi[1] + mj * xj[1]) / (mi + mj)
    return math.hypot(xk[0] - cx, xk[1] - cy)


# ---------------------------------------------------------------------------
# regularized chart

# chart vector: [wr, wi, ur, ui, qx, qy, px, py, E, t]
# zeta = w^2, u = dw/ds, q = xi, p = dxi/dt, E = |zeta_dot|^2/2 - kappa/r


def _make_lc_rhs(masses: MassTriple, trip):
    i, j, k = trip
    mi, mj, mk = masses.mass(i), masses.mass(j), masses.mass(k)
    mu_i = mi / (mi + mj)
    mu_j = mj / (mi + mj)
    a3 = (mi + mj) * mk / masses.M

    def rhs(s, y):
        wr, wi, ur, ui, qx, qy, px, py, E, t = y
        r = wr * wr + wi * wi
        zx = wr * wr - wi * wi
        zy = 2.0 * wr * wi
        dikx = qx - mu_j * zx
        diky = qy - mu_j * zy
        djkx = qx + mu_i * zx
        djky = qy + mu_i * zy
        rik = math.hypot(dikx, diky)
        rjk = math.hypot(djkx, djky)
        iik = 1.0 / (rik * rik * rik)
        ijk = 1.0 / (rjk * rjk * rjk)
        # tidal acceleration on the pair's relative coordinate
        Px = mk * (dikx * iik - djkx * ijk)
        Py = mk * (diky * iik - djky * ijk)
        half_r = 0.5 * r
        out = np.empty(10)
        out[0] = ur
        out[1] = ui
        out[2] = 0.5 * E * wr + half_r * (wr * Px + wi * Py)
        out[3] = 0.5 * E * wi + half_r * (wr * Py - wi * Px)
        out[4] = r * px
        out[5] = r * py
        out[6] = -r * (mi * mk * dikx * iik + mj * mk * djkx * ijk) / a3
        out[7] = -r * (mi * mk * diky * iik + mj * mk * djky * ijk) / a3
        wux = wr * ur - wi * ui
        wuy = wr * ui + wi * ur
        out[8] = 2.0 * (wux * Px + wuy * Py)
        out[9] = r
        return out

    return rhs


def _lc_chart_from_state(state: PhaseState, masses: MassTriple, trip):
    i, j, k = trip
    js = jacobi_split(state, masses, pair=(i, j))
    kappa = masses.mass(i) + masses.mass(j)
    E = 0.5 * float(js.zeta_dot @ js.zeta_dot) - kappa / js.r
    w = cmath.sqrt(complex(js.zeta[0], js.zeta[1]))
    zdotc = complex(js.zeta_dot[0], js.zeta_dot[1])
    u = 0.5 * zdotc * w.conjugate()
    y = np.array([w.real, w.imag, u.real, u.imag,
                  js.xi[0], js.xi[1], js.xi_dot[0], js.xi_dot[1],
                  E, state.t])
    x_cm, v_cm = _cm_of_state(state, masses)
    return y, (x_cm, v_cm, state.t)


def _cm_of_state(state: PhaseState, masses: MassTriple):
    m1, m2, m3 = masses.masses
    M = masses.M
    x_cm = (m1 * state.x1 + m2 * state.x2 + m3 * state.x3) / M
    v_cm = (m1 * state.v1 + m2 * state.v2 + m3 * state.v3) / M
    return x_cm, v_cm


def _lc_chart_to_state(y, masses: MassTriple, trip, cm_anchor) -> PhaseState:
    i, j, k = trip
    mi, mj, mk = masses.mass(i), masses.mass(j), masses.mass(k)
    mu_i = mi / (mi + mj)
    mu_j = mj / (mi + mj)
    wr, wi, ur, ui, qx, qy, px, py, E, t = y
    r = wr * wr + wi * wi
    zeta = np.array([wr * wr - wi * wi, 2.0 * wr * wi])
    r_safe = max(r, 1e-300)
    zeta_dot = np.array([2.0 * (wr * ur - wi * ui) / r_safe,
                         2.0 * (wr * ui + wi * ur) / r_safe])
    xi = np.array([qx, qy])
    xi_dot = np.array([px, py])
    x_cm0, v_cm0, t_anchor = cm_anchor
    x_cm = x_cm0 + v_cm0 * (t - t_anchor)
    v_cm = v_cm0
    x_cm_pair = x_cm - (mk / masses.M) * xi
    v_cm_pair = v_cm - (mk / masses.M) * xi_dot
    pos = [None, None, None]
    vel = [None, None, None]
    pos[k - 1] = x_cm + ((mi + mj) / masses.M) * xi
    vel[k - 1] = v_cm + ((mi + mj) / masses.M) * xi_dot
    pos[i - 1] = x_cm_pair + mu_j * zeta
    vel[i - 1] = v_cm_pair + mu_j * zeta_dot
    pos[j - 1] = x_cm_pair - mu_i * zeta
    vel[j - 1] = v_cm_pair - mu_i * zeta_dot
    return PhaseState(pos[0], pos[1], pos[2], vel[0], vel[1], vel[2], t)


def _lc_state_at(seg: _Segment, t: float, masses: MassTriple) -> PhaseState:
    """Evaluate a regularized segment at physical time t."""
    idx = np.searchsorted(seg.t_table, t)
    lo = seg.s_table[max(idx - 1, 0)]
    hi = seg.s_table[min(idx, len(seg.s_table) - 1)]
    if hi < lo:
        lo, hi = hi, lo
    if math.isclose(lo, hi):
        s = lo
    else:
        f = lambda s_: seg.sol(s_)[9] - t
        flo, fhi = f(lo), f(hi)
        if flo * fhi > 0:
            s = lo if abs(flo) < abs(fhi) else hi
        else:
            s = brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16)
    return _lc_chart_to_state(seg.sol(s), masses, seg.pair, seg.cm_anchor)


def _lc_height(y, masses: MassTriple, trip) -> float:
    i, j, k = trip
    mi, mj, mk = masses.mass(i), masses.mass(j), masses.mass(k)
    a1 = mi * mj / (mi + mj)
    a3 = (mi + mj) * mk / masses.M
    wr, wi = y[0], y[1]
    zx = wr * wr - wi * wi
    zy = 2.0 * wr * wi
    qx, qy = y[4], y[5]
    I = a1 * (zx * zx + zy * zy) + a3 * (qx * qx + qy * qy)
    return 2.0 * math.sqrt(a1 * a3) * (qx * zy - qy * zx) / I


# ---------------------------------------------------------------------------
# collinear-solution detection


def is_collinear_invariant(state: PhaseState, masses: MassTriple,
                           tol: float = 1e-12) -> bool:
    """True when positions and relative velocities share one line.

    Such solutions stay collinear forever, so every instant is a syzygy.
    """
    x_cm, v_cm = _cm_of_state(state, masses)
    rel = [state.position(i) - x_cm for i in (1, 2, 3)]
    relv = [state.velocity(i) - v_cm for i in (1, 2, 3)]
    scale = max(float(np.linalg.norm(r)) for r in rel)
    if scale == 0.0:
        return True
    u = max(rel, key=lambda r: float(np.linalg.norm(r)))
    u = u / np.linalg.norm(u)
    vscale = max(max(float(np.linalg.norm(v)) for v in relv), 1e-300)
    for r in rel:
        if abs(wedge(r, u)) > tol * scale:
            return False
    for v in relv:
        if abs(wedge(v, u)) > tol * vscale:
            return False
    return True


# ---------------------------------------------------------------------------
# the propagator


def propagate(state: PhaseState, masses: MassTriple,
              opts: PropagationOptions | None = None) -> Trajectory:
    """Integrate a state forward over the option horizon.

    Returns a Trajectory whose dense output can be evaluated at any time in
    range, with syzygy crossings refined on the interpolant, binary
    collisions continued through the regularized chart, triple collisions
    terminating the run, and an optional escape certificate.
    """
    opts = opts if opts is not None else PropagationOptions()
    cons0 = conserved(state, masses)
    R0 = cons0.R
    lc_radius = opts.lc_switch_radius if opts.lc_switch_radius is not None \
        else 1e-3 * R0
    triple_floor = opts.triple_floor if opts.triple_floor is not None \
        else 1e-8 * R0
    degenerate = is_collinear_invariant(state, masses)
    t0 = state.t
    t_end = t0 + opts.horizon

    rhs = _make_direct_rhs(masses)
    esc_thresh = [opts.escape_rho_factor * R0]

    def ev_height(t, y):
        return _height_from_y(y, masses)
    ev_height.terminal = False
    ev_height.direction = 0

    def ev_lc(t, y):
        return _min_pair_distance_y(y) - lc_radius
    ev_lc.terminal = True
    ev_lc.direction = -1

    def ev_triple(t, y):
        return _size_from_y(y, masses) - triple_floor
    ev_triple.terminal = True
    ev_triple.direction = -1

    def ev_escape(t, y):
        return _rho_min_pair_y(y, masses) - esc_thresh[0]
    ev_escape.terminal = True
    ev_escape.direction = 1

    def ev_leave_close(t, y):
        return _min_pair_distance_y(y) - lc_radius
    ev_leave_close.terminal = True
    ev_leave_close.direction = 1

    segments: list[_Segment] = []
    events: list[TrajectoryEvent] = []
    audits: list[SegmentAudit] = []
    diagnostics: dict = {}
    total_steps = 0
    status: TrajectoryStatus | None = None

    y = _pack(state)
    t = t0
    chart_hint: str | None = None    # 'lc' after an entry event, 'direct' after exit

    # a run starting exactly on a syzygy (non-degenerate) logs it up front
    if not degenerate and opts.detect_syzygies:
        z0, zdot0 = shape_height_and_rate(state, masses)
        if abs(z0) < 1e-13:
            events.append(TrajectoryEvent(
                t=t0, kind="syzygy", state=state,
                direction=int(np.sign(zdot0)) if abs(zdot0) > 1e-12 else 0))

    def syzygy_count() -> int:
        return sum(1 for e in events if e.kind in ("syzygy", "binary_collision"))

    def syzygy_budget_reached() -> bool:
        if opts.stop_after_syzygies is None:
            return False
        return syzygy_count() >= opts.stop_after_syzygies

    def record_audit(chart, ta, ya_state, tb, yb_state, flagged):
        ca = conserved(ya_state, masses)
        cb = conserved(yb_state, masses)
        audits.append(SegmentAudit(chart=chart, t0=ta, t1=tb, H0=ca.H, H1=cb.H,
                                   J0=ca.J, J1=cb.J, flagged=flagged))

    while status is None:
        if t >= t_end - _EPS * max(1.0, abs(t_end)):
            status = TrajectoryStatus.HORIZON_REACHED
            break
        if total_steps > opts.max_steps:
            status = TrajectoryStatus.FAILED
            diagnostics["failure"] = f"step budget {opts.max_steps} exceeded"
            break
        if syzygy_budget_reached():
            status = TrajectoryStatus.HORIZON_REACHED
            diagnostics["stopped_early"] = "syzygy_budget"
            break

        min_d = _min_pair_distance_y(y)
        if chart_hint != "direct" and (min_d < lc_radius or chart_hint == "lc"):
            chart_hint = None
            # regularized or fallback leg
            state_in = _unpack(y, t)
            trip = state_in.closest_pair()
            i, j, k = trip
            d3 = min(state_in.pair_distance(i, k), state_in.pair_distance(j, k))
            if d3 > 3.0 * lc_radius:
                remaining = None if opts.stop_after_syzygies is None \
                    else max(opts.stop_after_syzygies - syzygy_count(), 1)
                t, y, steps, lc_status = _run_lc_leg(
                    t, state_in, masses, trip, opts, t_end, lc_radius,
                    triple_floor, segments, events, audits, degenerate,
                    syzygy_budget=remaining)
                total_steps += steps
                if lc_status is not None:
                    status = lc_status
                elif events and events[-1].kind == "lc_exit" and \
                        "breakdown" not in [e.kind for e in events[-3:]]:
                    chart_hint = "direct"
                continue
            # near-triple: tiny-step direct integration, flagged
            t, y, steps, fb_status = _run_fallback_leg(
                t, y, masses, rhs, opts, t_end, lc_radius, triple_floor,
                segments, events, audits, degenerate,
                (ev_leave_close, ev_triple, ev_height))
            total_steps += steps
            if fb_status is not None:
                status = fb_status
            chart_hint = "direct"
            continue
        chart_hint = None

        ev_list = []
        if opts.detect_syzygies and not degenerate:
            if opts.stop_after_syzygies is not None:
                ev_height.terminal = max(opts.stop_after_syzygies
                                         - syzygy_count(), 1)
            ev_list.append(ev_height)
        ev_list.append(ev_lc)
        ev_list.append(ev_triple)
        if opts.escape_check:
            ev_list.append(ev_escape)

        sol = solve_ivp(rhs, (t, t_end), y, method="DOP853",
                        rtol=opts.rel_tol, atol=opts.abs_tol,
                        dense_output=True, events=ev_list)
        total_steps += sol.t.size
        if sol.status == -1:
            status = TrajectoryStatus.FAILED
            diagnostics["failure"] = sol.message
            _append_direct_segment(segments, audits, record_audit, sol, t,
                                   flagged=False)
            t = sol.t[-1]
            y = sol.y[:, -1]
            break

        _append_direct_segment(segments, audits, record_audit, sol, t,
                               flagged=False)
        _collect_height_events(sol, ev_list, masses, events, opts)

        t = sol.t[-1]
        y = sol.y[:, -1]

        if sol.status == 0:
            status = TrajectoryStatus.HORIZON_REACHED
            break

        # terminal event: find which
        fired = {id(f): sol.t_events[n] for n, f in enumerate(ev_list)
                 if len(sol.t_events[n])}
        if id(ev_triple) in fired:
            st = _unpack(y, t)
            events.append(TrajectoryEvent(t=t, kind="triple_collision",
                                          state=st,
                                          info={"R": conserved(st, masses).R}))
            status = TrajectoryStatus.TRIPLE_COLLISION
        elif id(ev_escape) in fired:
            st = _unpack(y, t)
            js = jacobi_split(st, masses)
            es = energy_split(js, masses)
            if es.H12 < 0.0 and es.H3 > 0.0 and es.nu > 0.0:
                events.append(TrajectoryEvent(
                    t=t, kind="escape", state=st,
                    info={"rho": js.rho, "H12": es.H12, "H3": es.H3,
                          "nu": es.nu, "pair": js.pair[:2]}))
                status = TrajectoryStatus.ESCAPED
            else:
                esc_thresh[0] *= 2.0
        elif id(ev_lc) in fired:
            chart_hint = "lc"

    t_final = segments[-1].t1 if segments else t0
    events.sort(key=lambda e: e.t)
    events = _dedupe_events(events, opts)
    return Trajectory(masses=masses, initial_state=state, segments=segments,
                      events=events, audits=audits,
                      status=status, t0=t0, t_final=t_final,
                      degenerate_collinear=degenerate,
                      diagnostics=diagnostics)


def _append_direct_segment(segments, audits, record_audit, sol, t_start,
                           flagged):
    seg = _Segment(chart="direct", t0=t_start, t1=sol.t[-1], sol=sol.sol,
                   flagged=flagged)
    segments.append(seg)
    record_audit("direct", t_start, _unpack(sol.y[:, 0], t_start),
                 sol.t[-1], _unpack(sol.y[:, -1], sol.t[-1]), flagged)


def _collect_height_events(sol, ev_list, masses, events, opts):
    for n, f in enumerate(ev_list):
        if f.__name__ != "ev_height":
            continue
        for te, ye in zip(sol.t_events[n], sol.y_events[n]):
            st = _unpack(ye, te)
            _, zdot = shape_height_and_rate(st, masses)
            direction = int(np.sign(zdot)) if abs(zdot) > 1e-12 else 0
            events.append(TrajectoryEvent(t=float(te), kind="syzygy",
                                          state=st, direction=direction))


def _dedupe_events(events, opts):
    out = []
    for e in events:
        if out and e.kind == out[-1].kind and \
                abs(e.t - out[-1].t) < max(opts.event_refine_tol * 1e-2, 1e-13):
            continue
        out.append(e)
    return out


def _run_lc_leg(t, state_in, masses, trip, opts, t_end, lc_radius,
                triple_floor, segments, events, audits, degenerate,
                syzygy_budget=None):
    """One pass through the regularized chart.  Returns (t, y12, steps, status)."""
    i, j, k = trip
    pc = masses.pair_constants((i, j))
    rhs = _make_lc_rhs(masses, trip)
    y0, cm_anchor = _lc_chart_from_state(state_in, masses, trip)
    H_before = conserved(state_in, masses).H

    def ev_exit(s, y):
        return (y[0] * y[0] + y[1] * y[1]) - lc_radius
    ev_exit.terminal = True
    ev_exit.direction = 1

    def ev_breakdown(s, y):
        zx = y[0] * y[0] - y[1] * y[1]
        zy = 2.0 * y[0] * y[1]
        dik = math.hypot(y[4] - pc.mu_j * zx, y[5] - pc.mu_j * zy)
        djk = math.hypot(y[4] + pc.mu_i * zx, y[5] + pc.mu_i * zy)
        return min(dik, djk) - lc_radius
    ev_breakdown.terminal = True
    ev_breakdown.direction = -1

    def ev_horizon(s, y):
        return y[9] - t_end
    ev_horizon.terminal = True
    ev_horizon.direction = 1

    def ev_triple(s, y):
        r = y[0] * y[0] + y[1] * y[1]
        Rsq = pc.alpha1 * r * r + pc.alpha3 * (y[4] * y[4] + y[5] * y[5])
        return math.sqrt(Rsq) - triple_floor
    ev_triple.terminal = True
    ev_triple.direction = -1

    def ev_peri(s, y):
        return y[0] * y[2] + y[1] * y[3]     # d(r)/ds / 2
    ev_peri.terminal = False
    ev_peri.direction = 1

    def ev_height(s, y):
        return _lc_height(y, masses, trip)
    ev_height.terminal = False if syzygy_budget is None else syzygy_budget
    ev_height.direction = 0

    ev_list = [ev_exit, ev_breakdown, ev_horizon, ev_triple, ev_peri]
    if opts.detect_syzygies and not degenerate:
        ev_list.append(ev_height)

    s_max = max(1e6, 100.0 * (t_end - t) / lc_radius)
    sol = solve_ivp(rhs, (0.0, s_max), y0, method="DOP853",
                    rtol=opts.rel_tol, atol=opts.abs_tol,
                    dense_output=True, events=ev_list)
    steps = sol.t.size

    # time table for inverting t(s) on this segment
    s_grid = sol.t
    t_grid = sol.y[9]
    seg = _Segment(chart="lc", t0=t, t1=float(sol.y[9, -1]), sol=sol.sol,
                   flagged=True, pair=trip, s0=0.0, s1=float(sol.t[-1]),
                   s_table=s_grid.copy(), t_table=t_grid.copy(),
                   cm_anchor=cm_anchor)
    segments.append(seg)

    events.append(TrajectoryEvent(t=t, kind="lc_entry", state=state_in,
                                  pair=(i, j)))

    r_min = math.inf
    # pericenter events: collision bookkeeping
    for se, ye in zip(sol.t_events[4], sol.y_events[4]):
        r_p = ye[0] * ye[0] + ye[1] * ye[1]
        r_min = min(r_min, r_p)
        if r_p < opts.collision_floor:
            st = _lc_chart_to_state(ye, masses, trip, cm_anchor)
            events.append(TrajectoryEvent(
                t=float(ye[9]), kind="binary_collision", state=st,
                pair=(i, j), info={"r_min": r_p}))
    # height crossings inside the chart
    if opts.detect_syzygies and not degenerate:
        for se, ye in zip(sol.t_events[5], sol.y_events[5]):
            st = _lc_chart_to_state(ye, masses, trip, cm_anchor)
            _, zdot = shape_height_and_rate(st, masses)
            direction = int(np.sign(zdot)) if abs(zdot) > 1e-12 else 0
            events.append(TrajectoryEvent(t=float(ye[9]), kind="syzygy",
                                          state=st, direction=direction))

    y_endc = sol.y[:, -1]
    state_out = _lc_chart_to_state(y_endc, masses, trip, cm_anchor)
    t_out = float(y_endc[9])
    H_after = conserved(state_out, masses).H
    audits.append(SegmentAudit(chart="lc", t0=t, t1=t_out,
                               H0=H_before, H1=H_after,
                               J0=conserved(state_in, masses).J,
                               J1=conserved(state_out, masses).J,
                               flagged=True))

    status = None
    if sol.status == -1:
        status = TrajectoryStatus.FAILED
    elif len(sol.t_events[3]):
        events.append(TrajectoryEvent(t=t_out, kind="triple_collision",
                                      state=state_out))
        status = TrajectoryStatus.TRIPLE_COLLISION
    elif len(sol.t_events[2]):
        status = TrajectoryStatus.HORIZON_REACHED
    elif len(sol.t_events[1]):
        events.append(TrajectoryEvent(t=t_out, kind="breakdown",
                                      state=state_out, pair=(i, j),
                                      info={"reason": "third body entered the chart"}))
    elif sol.status == 0:
        status = TrajectoryStatus.FAILED
    events.append(TrajectoryEvent(
        t=t_out, kind="lc_exit", state=state_out, pair=(i, j),
        info={"r_min": r_min if r_min < math.inf else None,
              "rel_energy_jump": abs(H_after - H_before) / max(abs(H_before), 1e-300)}))
    return t_out, _pack(state_out), steps, status


def _run_fallback_leg(t, y, masses, rhs, opts, t_end, lc_radius, triple_floor,
                      segments, events, audits, degenerate, evs):
    """Tiny-step direct integration through a near-triple encounter."""
    ev_leave, ev_triple, ev_height = evs
    ev_list = [ev_leave, ev_triple]
    if opts.detect_syzygies and not degenerate:
        ev_list.append(ev_height)
    kappa = max(masses.masses) * 2.0
    max_step = 0.05 * 2.0 * math.pi * math.sqrt(lc_radius ** 3 / kappa)
    sol = solve_ivp(rhs, (t, t_end), y, method="DOP853",
                    rtol=opts.rel_tol, atol=opts.abs_tol,
                    dense_output=True, events=ev_list, max_step=max_step)
    seg = _Segment(chart="direct", t0=t, t1=sol.t[-1], sol=sol.sol,
                   flagged=True)
    segments.append(seg)
    sa = _unpack(sol.y[:, 0], t)
    sb = _unpack(sol.y[:, -1], sol.t[-1])
    ca, cb = conserved(sa, masses), conserved(sb, masses)
    audits.append(SegmentAudit(chart="direct", t0=t, t1=sol.t[-1],
                               H0=ca.H, H1=cb.H, J0=ca.J, J1=cb.J,
                               flagged=True))
    if opts.detect_syzygies and not degenerate:
        idx = ev_list.index(ev_height)
        for te, ye in zip(sol.t_events[idx], sol.y_events[idx]):
            st = _unpack(ye, te)
            _, zdot = shape_height_and_rate(st, masses)
            events.append(TrajectoryEvent(
                t=float(te), kind="syzygy", state=st,
                direction=int(np.sign(zdot)) if abs(zdot) > 1e-12 else 0))
    status = None
    if sol.status == -1:
        status = TrajectoryStatus.FAILED
    elif len(sol.t_events[1]):
        st = _unpack(sol.y[:, -1], sol.t[-1])
        events.append(TrajectoryEvent(t=sol.t[-1], kind="triple_collision",
                                      state=st))
        status = TrajectoryStatus.TRIPLE_COLLISION
    elif sol.status == 0:
        status = TrajectoryStatus.HORIZON_REACHED
    return sol.t[-1], sol.y[:, -1], sol.t.size, status


# ---------------------------------------------------------------------------
# standalone regularized passage


@dataclass(frozen=True)
class PassageRecord:
    t_entry: float
    t_exit: float
    pair: tuple[int, int]
    r_min: float | None
    collided: bool
    rel_energy_jump: float
    events: list


def levi_civita_passage(state: PhaseState, masses: MassTriple,
                        opts: PropagationOptions | None = None
                        ) -> tuple[PhaseState, PassageRecord]:
    """Carry a state with a tight pair through the regularized chart.

    The tight pair must be inside the switch radius with the third body
    well outside it; raises RegularizationBreakdown otherwise.  Returns the
    state just after the pair separation grows back through the switch
    radius, plus a record of the passage.
    """
    opts = opts if opts is not None else PropagationOptions()
    R0 = conserved(state, masses).R
    lc_radius = opts.lc_switch_radius if opts.lc_switch_radius is not None \
        else 1e-3 * R0
    triple_floor = opts.triple_floor if opts.triple_floor is not None \
        else 1e-8 * R0
    trip = state.closest_pair()
    i, j, k = trip
    if state.pair_distance(i, j) >= lc_radius:
        raise RegularizationBreakdown(
            "tight pair is outside the switch radius")
    if min(state.pair_distance(i, k), state.pair_distance(j, k)) <= 3.0 * lc_radius:
        raise RegularizationBreakdown(
            "third body too close for the regularized chart")
    segments, events, audits = [], [], []
    t_end = state.t + opts.horizon
    t_out, y_out, _, status = _run_lc_leg(
        state.t, state, masses, trip, opts, t_end, lc_radius, triple_floor,
        segments, events, audits, degenerate=False)
    if status is TrajectoryStatus.FAILED:
        raise PropagationFailure("regularized passage did not complete")
    exit_ev = [e for e in events if e.kind == "lc_exit"][-1]
    collisions = [e for e in events if e.kind == "binary_collision"]
    record = PassageRecord(
        t_entry=state.t, t_exit=t_out, pair=(i, j),
        r_min=exit_ev.info.get("r_min"),
        collided=bool(collisions),
        rel_energy_jump=exit_ev.info["rel_energy_jump"],
        events=[e for e in events if e.kind in ("syzygy", "binary_collision")])
    return _unpack(y_out, t_out), record


# ---------------------------------------------------------------------------
# initial conditions


def sample_initial_conditions(seed: int, masses: MassTriple,
                              target_energy: float, scale: float = 1.0,
                              max_retries: int = 200) -> PhaseState:
    """Deterministic zero-momentum, zero-angular-momentum state with H = h.

    Positions are drawn in a disk of the given radius, the barycenter and
    total momentum are removed, the rigid rotation J/I is subtracted (which
    zeroes the angular momentum exactly), and the velocities are rescaled
    so the energy matches.  Collinear draws and draws indistinguishable
    from the resting equilateral are rejected.
    """
    if not target_energy < 0.0:
        raise ValueError("target energy must be negative")
    rng = np.random.default_rng(seed)
    m = np.array(masses.masses)
    for _ in range(max_retries):
        radii = scale * np.sqrt(rng.uniform(size=3))
        angles = rng.uniform(0.0, 2.0 * math.pi, size=3)
        pos = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
        vel = rng.standard_normal((3, 2))
        pos -= (m[:, None] * pos).sum(axis=0) / masses.M
        vel -= (m[:, None] * vel).sum(axis=0) / masses.M
        I = float((m * (pos ** 2).sum(axis=1)).sum())
        if I < 1e-12 * scale * scale:
            continue
        J = float((m * (pos[:, 0] * vel[:, 1] - pos[:, 1] * vel[:, 0])).sum())
        omega = J / I
        vel[:, 0] += omega * pos[:, 1]
        vel[:, 1] -= omega * pos[:, 0]
        state = PhaseState.from_arrays(pos, vel)
        cons = conserved(state, masses)
        K_target = cons.U + target_energy
        if K_target <= 0.0 or cons.K < 1e-12:
            continue
        vel *= math.sqrt(K_target / cons.K)
        state = PhaseState.from_arrays(pos, vel)
        z, _ = shape_height_and_rate(state, masses)
        if abs(z) < 1e-3:
            continue
        cons = conserved(state, masses)
        near_pole = lagrange_height(masses) - abs(z) < 1e-6
        if near_pole and cons.K < 1e-6 * abs(target_energy):
            continue
        return state
    raise SamplingExhausted(f"no acceptable draw in {max_retries} tries")


def lagrange_homothety(masses: MassTriple, energy: float) -> PhaseState:
    """Resting equilateral configuration whose size realizes the energy.

    At rest H = -U, so the side length is sum(m_i m_j) / |H|.  The forward
    and backward evolutions are pure homotheties ending in triple collision.
    """
    if not energy < 0.0:
        raise ValueError("energy must be negative")
    side = masses.pair_mass_sum / abs(energy)
    return equilateral_state(masses, side=side, orientation=+1)


def lagrange_collapse_time(masses: MassTriple, energy: float) -> float:
    """Closed-form free-fall time of the homothety to triple collision.

    The scale factor obeys s'' = -kappa / s^2 from rest at s = 1 with
    kappa = M / side^3, giving t = (pi/2) sqrt(side^3 / (2 M)).
    """
    side = masses.pair_mass_sum / abs(energy)
    return free_fall_time(1.0, masses.M / side ** 3)


def free_fall_time(x0: float, k: float) -> float:
    """Fall time to the origin for x'' = -k / x^2 from rest at x0."""
    return 0.5 * math.pi * math.sqrt(x0 ** 3 / (2.0 * k))


def hierarchical_state(masses: MassTriple, pair_sep: float = 0.2,
                       rho: float = 10.0,
                       outer_energy: float | None = None,
                       total_energy: float | None = None,
                       outer_mode: str = "radial",
                       zero_total_j: bool = True) -> PhaseState:
    """Tight circular binary (bodies 1, 2) plus an outer third body.

    The binary sits along the x axis and the outer vector along y, so the
    configuration starts well away from collinear.  `outer_mode`:

    * "radial": the outer body moves radially; its speed comes from
      `outer_energy` (the outer two-body energy H3) or from solving for
      `total_energy` exactly.  A small transverse component is added when
      `zero_total_j` to cancel the binary's angular momentum.
    * "circular": the outer body is on a circular two-body orbit around the
      pair's barycenter (zero_total_j is ignored).
    """
    pc = masses.pair_constants((1, 2))
    kappa = masses.m1 + masses.m2
    v_circ_pair = math.sqrt(kappa / pair_sep)
    zeta = np.array([pair_sep, 0.0])
    zeta_dot = np.array([0.0, v_circ_pair])
    xi = np.array([0.0, rho])
    J12 = pc.alpha1 * wedge(zeta, zeta_dot)

    if outer_mode == "circular":
        v_out = math.sqrt(masses.M / rho)
        xi_dot = np.array([-v_out, 0.0])
    elif outer_mode == "radial":
        if zero_total_j:
            # J3 = alpha3 (xi ^ xi_dot) = -alpha3 rho xi_dot_x must cancel J12
            xi_dot_perp = np.array([J12 / (pc.alpha3 * rho), 0.0])
        else:
            xi_dot_perp = np.zeros(2)

        def make_state(nu):
            xd = xi_dot_perp + nu * np.array([0.0, 1.0])
            return _assemble_hierarchical(masses, zeta, zeta_dot, xi, xd)

        if total_energy is not None:
            f = lambda nu: conserved(make_state(nu), masses).H - total_energy
            lo, hi = 0.0, 1.0
            while f(hi) < 0.0 and hi < 1e6:
                hi *= 2.0
            if f(lo) > 0.0:
                raise ValueError("binary too loose for the requested energy")
            nu = brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
        elif outer_energy is not None:
            vsq = 2.0 * (outer_energy + pc.beta3 / rho) / pc.alpha3 \
                - float(xi_dot_perp @ xi_dot_perp)
            if vsq < 0.0:
                raise ValueError("outer energy unreachable at this rho")
            nu = math.sqrt(vsq)
        else:
            nu = 0.0
        xi_dot = xi_dot_perp + nu * np.array([0.0, 1.0])
    else:
        raise ValueError(f"unknown outer_mode {outer_mode!r}")
    return _assemble_hierarchical(masses, zeta, zeta_dot, xi, xi_dot)


def _assemble_hierarchical(masses, zeta, zeta_dot, xi, xi_dot) -> PhaseState:
    mk = masses.m3
    x_cm_pair = -(mk / masses.M) * xi
    v_cm_pair = -(mk / masses.M) * xi_dot
    x3 = x_cm_pair + xi
    v3 = v_cm_pair + xi_dot
    x1 = x_cm_pair + masses.mu2 * zeta
    v1 = v_cm_pair + masses.mu2 * zeta_dot
    x2 = x_cm_pair - masses.mu1 * zeta
    v2 = v_cm_pair - masses.mu1 * zeta_dot
    return PhaseState(x1, x2, x3, v1, v2, v3, 0.0)
