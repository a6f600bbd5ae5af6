"""Far-field estimates: the model Kepler fall, its scaling family, scalar
comparison problems, doubling intervals of the outer distance, and the
decoupling bounds along far segments of real trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.stats import linregress

from .dynamics import MassTriple, conserved
from .errors import HypothesisViolation, NoExcursion, NoFarSegment, PastCollision
from .propagate import Trajectory
from .shape import collision_rays, q_potential_term, shape_point, sigma_series

# fall time of the unit Kepler drop x'' = -1/x^2 from rest at x = 1
MODEL_FALL_TIME = math.pi / (2.0 * math.sqrt(2.0))


def model_kepler(tau: float) -> tuple[float, float]:
    """The radial Kepler fall phi'' = -1/phi^2, phi(0) = 1, phi'(0) = 0.

    Solved in closed form through the cycloid parameter eta:
    phi = (1 + cos eta)/2 and sqrt(8) tau = eta + sin eta.  The solution is
    even in tau and reaches the collision at |tau| = pi / (2 sqrt(2)).
    """
    a = abs(tau)
    if a > MODEL_FALL_TIME * (1.0 + 1e-12):
        raise PastCollision(f"|tau| = {a} beyond the fall time")
    target = math.sqrt(8.0) * min(a, MODEL_FALL_TIME)
    if target <= 0.0:
        eta = 0.0
    elif target >= math.pi:
        eta = math.pi
    else:
        eta = brentq(lambda e: e + math.sin(e) - target, 0.0, math.pi,
                     xtol=1e-15, rtol=8.9e-16)
    phi = 0.5 * (1.0 + math.cos(eta))
    if eta >= math.pi - 1e-12:
        dphi = -math.inf
    else:
        dphi = -math.sqrt(2.0) * math.tan(0.5 * eta)
    if tau < 0.0:
        dphi = -dphi
    return phi, dphi


def scaled_kepler(lam: float, c: float, t: float, t_star: float
                  ) -> tuple[float, float]:
    """The fall scaled to rho'' = -c/rho^2 with rho(t*) = lam, rho'(t*) = 0.

    rho(t) = lam * phi(lam^(-3/2) sqrt(c) (t - t_star)); the chain rule
    gives the velocity sqrt(c / lam) phi'.
    """
    if lam <= 0.0 or c <= 0.0:
        raise ValueError("lam and c must be positive")
    tau = lam ** -1.5 * math.sqrt(c) * (t - t_star)
    phi, dphi = model_kepler(tau)
    return lam * phi, math.sqrt(c / lam) * dphi


def kepler_scaling_residual(lam: float, c: float, t_star: float,
                            ts: np.ndarray) -> np.ndarray:
    """|rho'' + c/rho^2| rho^2 on a grid, rho'' by a five-point stencil."""
    ts = np.asarray(ts, dtype=float)
    h = (ts[-1] - ts[0]) / 2000.0
    out = np.empty(ts.size)
    for n, t in enumerate(ts):
        vals = [scaled_kepler(lam, c, t + m * h, t_star)[0]
                for m in (-2, -1, 0, 1, 2)]
        second = (-vals[0] + 16 * vals[1] - 30 * vals[2]
                  + 16 * vals[3] - vals[4]) / (12.0 * h * h)
        rho = vals[2]
        out[n] = abs(second + c / rho ** 2) * rho ** 2
    return out


# ---------------------------------------------------------------------------
# the comparison problem


@dataclass
class SandwichProblem:
    """Three scalar second-order problems sharing at-rest initial data.

    f_minus and f_plus are autonomous, f may depend on time; the required
    ordering is f_minus(x) < f(x, t) < f_plus(x) < 0 for x > x_c, with
    f_minus and f_plus monotone increasing there.
    """

    f_minus: object
    f: object
    f_plus: object
    x_star: float
    x_c: float
    t_span: tuple[float, float] = (0.0, 10.0)
    hypothesis_grid: int = 64

    def validate(self) -> None:
        xs = np.linspace(self.x_c * 1.0001, self.x_star, self.hypothesis_grid)
        ts = np.linspace(self.t_span[0], self.t_span[1], self.hypothesis_grid)
        fm = np.array([self.f_minus(x) for x in xs])
        fp = np.array([self.f_plus(x) for x in xs])
        if not (fp < 0.0).all():
            raise HypothesisViolation("f_plus must be negative above x_c")
        if not (np.diff(fm) > 0).all() or not (np.diff(fp) > 0).all():
            raise HypothesisViolation("f_minus / f_plus must be increasing")
        for t in ts:
            fmid = np.array([self.f(x, t) for x in xs])
            if not ((fm < fmid) & (fmid < fp)).all():
                raise HypothesisViolation(
                    f"ordering f_- < f < f_+ fails at t = {t}")


@dataclass(frozen=True)
class SandwichVerdict:
    ok: bool
    max_order_violation: float
    max_derivative_violation: float
    first_violation_t: float | None
    t: np.ndarray
    x_minus: np.ndarray
    x: np.ndarray
    x_plus: np.ndarray
    v_minus: np.ndarray
    v: np.ndarray
    v_plus: np.ndarray
    stopped_at: float


def comparison_sandwich(problem: SandwichProblem, tol: float = 1e-8,
                        n_samples: int = 400) -> SandwichVerdict:
    """Integrate the three problems together and check both conclusions.

    Conclusion (1): x_-(t) <= x(t) <= x_+(t) <= x_* with equality only at
    t = 0; conclusion (2): dx_-/dt < dx/dt < dx_+/dt for t > 0.  Checked
    while x_- stays above x_c; violations beyond `tol` are reported with
    the earliest offending time.
    """
    problem.validate()

    def rhs(t, y):
        return [y[1], problem.f_minus(y[0]),
                y[3], problem.f(y[2], t),
                y[5], problem.f_plus(y[4])]

    def hit_cutoff(t, y):
        return y[0] - problem.x_c
    hit_cutoff.terminal = True
    hit_cutoff.direction = -1

    y0 = [problem.x_star, 0.0] * 3
    sol = solve_ivp(rhs, problem.t_span, y0, method="DOP853",
                    rtol=1e-12, atol=1e-12, dense_output=True,
                    events=[hit_cutoff])
    t_stop = sol.t[-1]
    ts = np.linspace(problem.t_span[0], t_stop, n_samples)
    Y = sol.sol(ts)
    xm, vm, x, v, xp, vp = Y

    order_viol = np.maximum.reduce([
        xm - x, x - xp, xp - problem.x_star * np.ones_like(xp)])
    # derivative ordering for t > 0
    pos = ts > 0
    deriv_viol = np.zeros_like(ts)
    deriv_viol[pos] = np.maximum(vm[pos] - v[pos], v[pos] - vp[pos])
    worst_order = float(order_viol.max(initial=0.0))
    worst_deriv = float(deriv_viol.max(initial=0.0))
    bad = np.nonzero((order_viol > tol) | (deriv_viol > tol))[0]
    first_bad = float(ts[bad[0]]) if bad.size else None
    return SandwichVerdict(
        ok=bad.size == 0, max_order_violation=worst_order,
        max_derivative_violation=worst_deriv, first_violation_t=first_bad,
        t=ts, x_minus=xm, x=x, x_plus=xp, v_minus=vm, v=v, v_plus=vp,
        stopped_at=float(t_stop))


def random_kepler_sandwich(rng: np.random.Generator) -> SandwichProblem:
    """A randomized inverse-square comparison problem with valid hypotheses."""
    c_plus = rng.uniform(0.5, 2.0)
    gap = rng.uniform(0.05, 0.5)
    wobble = rng.uniform(0.0, 0.45) * gap
    c_mid_base = c_plus + 0.5 * gap
    c_minus = c_plus + gap
    freq = rng.uniform(0.3, 3.0)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    x_star = rng.uniform(5.0, 20.0)
    x_c = rng.uniform(0.5, 0.2 * x_star)

    def f_minus(x, c=c_minus):
        return -c / x ** 2

    def f_plus(x, c=c_plus):
        return -c / x ** 2

    def f(x, t, base=c_mid_base, a=wobble, om=freq, ph=phase):
        return -(base + a * math.sin(om * t + ph)) / x ** 2

    return SandwichProblem(f_minus=f_minus, f=f, f_plus=f_plus,
                           x_star=x_star, x_c=x_c, t_span=(0.0, 8.0))


# ---------------------------------------------------------------------------
# doubling intervals of the outer distance


@dataclass(frozen=True)
class DoublingWitness:
    t1: float
    t_star: float
    t3: float | None
    rho_star: float
    c3: float
    branch: str                     # 'escape' or 'oscillatory'
    monotone_up: bool
    monotone_down: bool | None
    nu_infinity: float | None


def _outer_distance_series(trajectory: Trajectory, n: int):
    series = trajectory.series(n=n)
    rho = series.rho
    ts = series.t
    rho_dot = np.gradient(rho, ts)
    return ts, rho, rho_dot, series


def doubling_interval(trajectory: Trajectory, masses: MassTriple,
                      rho0: float, n: int = 6000) -> DoublingWitness | None:
    """Find the doubling structure rho(t1) = rho*, rho(t*) = 2 rho*.

    Escape branch: picks t1 once the outer speed has settled under
    c3 = nu_inf + eps (nu_inf from a tail fit of rho_dot against a + b/rho)
    and requires monotone growth to the doubling time.  Oscillatory branch:
    anchors t* at a turning point rho_dot = 0 with rho(t*) = 2 rho* and
    walks down both sides.  Returns None when the trajectory never shows
    the structure within its horizon.
    """
    ts, rho, rho_dot, _ = _outer_distance_series(trajectory, n)
    if rho.max() < 2.0 * rho0:
        return None

    # oscillatory: a genuine interior maximum high enough to double
    imax = int(np.argmax(rho))
    interior_max = 0 < imax < len(ts) - 1 and rho[imax] >= 2.0 * rho0 \
        and rho[-1] < rho[imax] * 0.98
    if interior_max:
        rho_star = rho[imax] / 2.0
        t_star = ts[imax]
        before = np.nonzero((ts < t_star) & (rho <= rho_star))[0]
        after = np.nonzero((ts > t_star) & (rho <= rho_star))[0]
        if before.size and after.size:
            i1, i3 = before[-1], after[0]
            up = rho[i1:imax + 1]
            down = rho[imax:i3 + 1]
            c3 = float(np.abs(rho_dot[i1:i3 + 1]).max())
            return DoublingWitness(
                t1=float(ts[i1]), t_star=float(t_star), t3=float(ts[i3]),
                rho_star=float(rho_star), c3=c3, branch="oscillatory",
                monotone_up=bool((np.diff(up) > -1e-9 * rho_star).all()),
                monotone_down=bool((np.diff(down) < 1e-9 * rho_star).all()),
                nu_infinity=None)

    # escape: fit the tail of rho_dot against a + b / rho
    far = rho >= max(rho0, 0.25 * rho.max())
    if far.sum() < 10:
        return None
    A = np.stack([np.ones(far.sum()), 1.0 / rho[far]], axis=1)
    coef, *_ = np.linalg.lstsq(A, rho_dot[far], rcond=None)
    nu_inf = float(coef[0])
    if nu_inf <= 0.0:
        return None
    c3 = nu_inf * 1.05 + 1e-9
    ok = np.nonzero((rho >= rho0) & (rho_dot > 0.0) & (rho_dot <= c3))[0]
    if ok.size == 0:
        return None
    i1 = ok[0]
    rho_star = float(rho[i1])
    hits = np.nonzero(rho[i1:] >= 2.0 * rho_star)[0]
    if hits.size == 0:
        return None
    istar = i1 + hits[0]
    up = rho[i1:istar + 1]
    window_speed = np.abs(rho_dot[i1:istar + 1])
    return DoublingWitness(
        t1=float(ts[i1]), t_star=float(ts[istar]), t3=None,
        rho_star=rho_star, c3=c3, branch="escape",
        monotone_up=bool((np.diff(up) > -1e-9 * rho_star).all()),
        monotone_down=None,
        nu_infinity=nu_inf) if (window_speed <= c3 * (1 + 1e-6)).all() \
        else None


# ---------------------------------------------------------------------------
# far-field bound verification


@dataclass(frozen=True)
class FarFieldReport:
    rho0: float
    t_window: tuple[float, float]
    pair: tuple[int, int]
    sup_J12: float
    J12_envelope: float
    sup_rho_Vperp: float
    rho_Vperp_envelope: float
    residual_slope: float
    sup_residual_scaled: float      # sup |rho'' + M/rho^2| rho^3
    min_distance_product_max: float  # max over samples of r |H|
    min_distance_bound: float        # sum m_i m_j
    sup_g_scaled: float              # sup |g| rho^2 / r
    n_samples: int


def far_field_bounds(trajectory: Trajectory, masses: MassTriple,
                     rho0: float, n: int = 20000) -> FarFieldReport:
    """Verify the two-body decoupling estimates on the far segment.

    Works on the longest maximal interval with rho >= rho0: the tight
    pair's angular momentum stays under the energy envelope, the outer
    transverse velocity under (|J| + sup|J12|)/alpha3, and the outer radial
    acceleration matches -M/rho^2 with a remainder decaying at least like
    rho^-3 (slope fitted over rho in [rho0, 10 rho0]).
    """
    series = trajectory.series(n=n)
    mask = series.rho >= rho0
    if not mask.any():
        raise NoFarSegment(f"outer distance never reaches {rho0}")
    # longest contiguous run
    runs = _runs(mask)
    i0, i1 = max(runs, key=lambda ab: ab[1] - ab[0])
    sl = slice(i0, i1 + 1)
    ts = series.t[sl]
    pos = series.pos[sl]
    vel = series.vel[sl]

    # fixed pair on the window: the closest pair at the window midpoint
    mid_state = trajectory.state_at(float(ts[len(ts) // 2]))
    trip = mid_state.closest_pair()
    i, j, k = trip
    pc = masses.pair_constants((i, j))
    mi, mj, mk = masses.mass(i), masses.mass(j), masses.mass(k)

    zeta = pos[:, i - 1] - pos[:, j - 1]
    zeta_dot = vel[:, i - 1] - vel[:, j - 1]
    cm = (mi * pos[:, i - 1] + mj * pos[:, j - 1]) / (mi + mj)
    cm_dot = (mi * vel[:, i - 1] + mj * vel[:, j - 1]) / (mi + mj)
    xi = pos[:, k - 1] - cm
    xi_dot = vel[:, k - 1] - cm_dot
    r = np.linalg.norm(zeta, axis=1)
    rho = np.linalg.norm(xi, axis=1)

    J12 = pc.alpha1 * (zeta[:, 0] * zeta_dot[:, 1] - zeta[:, 1] * zeta_dot[:, 0])
    nu = (xi * xi_dot).sum(1) / rho
    Vperp = xi_dot - nu[:, None] * (xi / rho[:, None])
    rho_Vperp = rho * np.linalg.norm(Vperp, axis=1)

    cons0 = conserved(trajectory.initial_state, masses)
    H, J = cons0.H, cons0.J
    sup_J12 = float(np.abs(J12).max())
    env_a = masses.beta1 ** 2 / abs(H) + 10.0 / rho0 if H != 0 else math.inf
    env_b = (abs(J) + sup_J12) / pc.alpha3

    # outer radial acceleration from the dense output (central differences)
    rho_dot = np.gradient(rho, ts)
    rho_ddot = np.gradient(rho_dot, ts)
    resid = np.abs(rho_ddot + masses.M / rho ** 2)
    # clip differentiation artifacts at the window edges
    core = slice(2, -2) if len(ts) > 8 else slice(None)
    fit_mask = (rho[core] >= rho0) & (rho[core] <= 10.0 * rho0)
    if fit_mask.sum() >= 8:
        fit = linregress(np.log(rho[core][fit_mask]),
                         np.log(resid[core][fit_mask] + 1e-300))
        slope = float(fit.slope)
    else:
        slope = math.nan

    g = np.empty(len(ts))
    for idx in range(len(ts)):
        d_ik = xi[idx] - pc.mu_j * zeta[idx]
        d_jk = xi[idx] + pc.mu_i * zeta[idx]
        g[idx] = pc.beta3 / rho[idx] - mi * mk / np.linalg.norm(d_ik) \
            - mj * mk / np.linalg.norm(d_jk)

    return FarFieldReport(
        rho0=rho0, t_window=(float(ts[0]), float(ts[-1])), pair=(i, j),
        sup_J12=sup_J12, J12_envelope=float(env_a),
        sup_rho_Vperp=float(rho_Vperp.max()),
        rho_Vperp_envelope=float(env_b),
        residual_slope=slope,
        sup_residual_scaled=float((resid[core] * rho[core] ** 3).max()),
        min_distance_product_max=float((series.r_min * abs(H)).max()),
        min_distance_bound=masses.pair_mass_sum,
        sup_g_scaled=float((np.abs(g) * rho ** 2 / np.maximum(r, 1e-300)).max()),
        n_samples=len(ts))


def _runs(mask: np.ndarray):
    """Contiguous True runs of a boolean array as (start, stop) inclusive."""
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return []
    splits = np.nonzero(np.diff(idx) > 1)[0]
    starts = np.concatenate([[idx[0]], idx[splits + 1]])
    stops = np.concatenate([idx[splits], [idx[-1]]])
    return list(zip(starts.tolist(), stops.tolist()))


# ---------------------------------------------------------------------------
# excursion metrics


@dataclass(frozen=True)
class ExcursionMetrics:
    R0: float
    t_window: tuple[float, float]
    length: float                  # sigma-length of the excursion
    omega_min: float
    omega_min_source: str          # 'measured', 'proxy', or 'mixed'
    length_R0: float
    length_omega: float
    syzygy_count: int
    sturm_floor: int
    count_ok: bool


def excursion_metrics(trajectory: Trajectory, masses: MassTriple,
                      R0: float, n: int = 20000) -> ExcursionMetrics:
    """Oscillation bookkeeping on the maximal interval with R >= R0.

    The sigma-length is the integral of dt/I over the window; the
    oscillator floor omega_min uses the measured coefficient where the
    sigma grid resolves it and the potential-term proxy I * q_pot
    elsewhere.  The syzygy count on the window is compared against the
    floor(length * omega_min / pi) oscillation bound.
    """
    coarse = trajectory.series(n=4000)
    mask = coarse.R >= R0
    if not mask.any():
        raise NoExcursion(f"size never reaches {R0}")
    runs = _runs(mask)
    i0, i1 = max(runs, key=lambda ab: coarse.t[ab[1]] - coarse.t[ab[0]])
    t_lo, t_hi = float(coarse.t[i0]), float(coarse.t[i1])
    if t_hi <= t_lo:
        raise NoExcursion("degenerate excursion window")

    series = sigma_series(trajectory, n=n, window=(t_lo, t_hi))
    length = float(series.sigma[-1] - series.sigma[0])

    # proxy oscillator coefficient from the potential term
    rays = collision_rays(masses)
    sample_ts = np.linspace(t_lo, t_hi, 400)
    proxy = np.empty(sample_ts.size)
    for idx, t in enumerate(sample_ts):
        st = trajectory.state_at(float(t))
        sp = shape_point(st, masses)
        proxy[idx] = sp.R ** 2 * q_potential_term(sp, masses, rays)
    proxy_min = float(proxy.min())

    measured = series.omega2[series.omega2_defined()]
    if measured.size:
        measured_min = float(measured.min())
        omega2_min = min(measured_min, proxy_min)
        source = "mixed" if series.omega2_defined().sum() < series.sigma.size \
            else "measured"
    else:
        omega2_min = proxy_min
        source = "proxy"
    omega_min = math.sqrt(max(omega2_min, 0.0))

    count = sum(1 for e in trajectory.syzygy_like_events()
                if t_lo <= e.t <= t_hi)
    floor = int(math.floor(length * omega_min / math.pi))
    return ExcursionMetrics(
        R0=R0, t_window=(t_lo, t_hi), length=length, omega_min=omega_min,
        omega_min_source=source, length_R0=length * R0,
        length_omega=length * omega_min, syzygy_count=count,
        sturm_floor=floor, count_ok=count >= floor)


# ---------------------------------------------------------------------------
# second-derivative audit of the size


def lagrange_jacobi_residual(trajectory: Trajectory, masses: MassTriple,
                             n: int = 20000,
                             window: tuple[float, float] | None = None
                             ) -> np.ndarray:
    """Relative residual of 2 d(R R')/dt = 4H + 2U along the trajectory.

    R R' is differentiated from the dense output with a five-point stencil
    (the identity audits the interpolant's second derivatives), on the
    requested window or the whole span.
    """
    t0, t1 = window if window is not None else (trajectory.t0,
                                                trajectory.t_final)
    ts = np.linspace(t0, t1, n)
    series = trajectory.series(ts=ts)
    m = np.array(masses.masses)
    x_cm = (m[None, :, None] * series.pos).sum(1) / masses.M
    v_cm = (m[None, :, None] * series.vel).sum(1) / masses.M
    RRdot = np.zeros(ts.size)
    for b in range(3):
        rel = series.pos[:, b] - x_cm
        relv = series.vel[:, b] - v_cm
        RRdot += m[b] * (rel * relv).sum(1)
    h = ts[1] - ts[0]
    d = (RRdot[:-4] - 8.0 * RRdot[1:-3] + 8.0 * RRdot[3:-1] - RRdot[4:]) \
        / (12.0 * h)
    lhs = 2.0 * d
    rhs = (4.0 * series.H + 2.0 * series.U)[2:-2]
    return np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)
