"""Shape-sphere reduction of the planar three-body configuration.

Mass-normalized Jacobi coordinates z1 = sqrt(alpha1) zeta, z2 = sqrt(alpha3) xi
(as complex numbers) are pushed through the Hopf map

    w1 = (|z1|^2 - |z2|^2) / 2,   w2 + i w3 = conj(z2) z1,

which gives |w| = R^2 / 2 with R^2 = I the moment of inertia.  The unit
vector n = 2 w / R^2 parametrizes the shape sphere: longitude theta,
latitude phi, and the height z = n3 = sin(phi).

Conventions and facts used throughout:

* z = 2 sqrt(alpha1 alpha3) (xi ^ zeta) / R^2, so the sign of z is the sign
  of the oriented area of the triangle (x1, x2, x3); z = 0 exactly on
  collinear configurations and -1 <= z <= 1 always.  The third Hopf
  component is taken as Im(conj(z2) z1) so that positively oriented
  triangles sit in the upper hemisphere.
* The height is independent of which pair anchors the Jacobi split as long
  as the split is even-ordered (see dynamics.ORDERED_PAIRS).
* For equal masses |z| = 1 exactly on equilateral triangles.  For general
  masses the equilateral shape sits at the constant height
  lagrange_height(masses) = sqrt(3) sqrt(alpha1 alpha3) M / sum(m_i m_j),
  which equals 1 iff the masses are equal; this chart keeps the squared
  distance relations below exact at the cost of that rescaling.
* Each squared pair distance is an exact affine function of the shape:
  s_k = R^2 lambda_k (1 - cos(theta - theta_k) cos(phi)) where k names the
  body opposite the pair, lambda_k = 1 / (2 alpha1^(k)), and theta_k is the
  longitude of the pair's collision ray on the equator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import savgol_filter

from .dynamics import MassTriple, PhaseState, jacobi_split, wedge
from .errors import BinaryCollision, TripleCollision

TRIPLE_FLOOR = 1e-12
Z_FLOOR_DEFAULT = 0.05


@dataclass(frozen=True)
class ShapePoint:
    """Size and shape-sphere coordinates of one configuration."""

    R: float
    w: np.ndarray        # Hopf vector, |w| = R^2 / 2
    n: np.ndarray        # unit vector w / |w|
    theta: float         # longitude in (-pi, pi]
    phi: float           # latitude in [-pi/2, pi/2], equator at 0
    z: float             # height, z = n3 = sin(phi)


@dataclass(frozen=True)
class CollisionRays:
    """Longitudes of the binary-collision rays and the distance constants.

    Index k in {1, 2, 3} names the body opposite the colliding pair:
    s_k = r_ij^2 = R^2 lambda_k (1 - cos(theta - theta_k) cos(phi)).
    """

    theta: tuple[float, float, float]
    lam: tuple[float, float, float]
    pair_mass_products: tuple[float, float, float]   # m_i m_j opposite k

    def gamma(self, k: int, theta: float) -> float:
        return math.cos(theta - self.theta[k - 1])

    def squared_distance(self, k: int, R: float, theta: float,
                         phi: float) -> float:
        """s_k = r_ij^2 from the shape coordinates (exact)."""
        return R * R * self.lam[k - 1] * (1.0 - self.gamma(k, theta) * math.cos(phi))

    def squared_distances(self, R: float, theta: float, phi: float):
        return tuple(self.squared_distance(k, R, theta, phi) for k in (1, 2, 3))


def _normalized_jacobi(state: PhaseState, masses: MassTriple):
    """Complex mass-normalized Jacobi coordinates for the (1,2;3) split."""
    js = jacobi_split(state, masses, pair=(1, 2))
    z1 = math.sqrt(masses.alpha1) * complex(js.zeta[0], js.zeta[1])
    z2 = math.sqrt(masses.alpha3) * complex(js.xi[0], js.xi[1])
    return js, z1, z2


def shape_point(state: PhaseState, masses: MassTriple,
                triple_floor: float = TRIPLE_FLOOR) -> ShapePoint:
    """Map a configuration to the shape sphere.

    Invariant under rotation and translation of the plane; scaling x -> c x
    maps R -> c R with (theta, phi, z) fixed.  Raises TripleCollision when
    R falls below `triple_floor`.
    """
    _, z1, z2 = _normalized_jacobi(state, masses)
    n1sq = z1.real * z1.real + z1.imag * z1.imag
    n2sq = z2.real * z2.real + z2.imag * z2.imag
    Rsq = n1sq + n2sq
    if Rsq <= triple_floor * triple_floor:
        raise TripleCollision(f"size R = {math.sqrt(Rsq)} below floor")
    cross = z2.conjugate() * z1
    w = np.array([0.5 * (n1sq - n2sq), cross.real, cross.imag])
    n = 2.0 * w / Rsq
    z = float(np.clip(n[2], -1.0, 1.0))
    return ShapePoint(R=math.sqrt(Rsq), w=w, n=n,
                      theta=math.atan2(n[1], n[0]),
                      phi=math.asin(z), z=z)


def shape_height(state: PhaseState, masses: MassTriple) -> float:
    """The height z alone (fast path used by event detection)."""
    js = jacobi_split(state, masses, pair=(1, 2))
    Isq = masses.alpha1 * js.r ** 2 + masses.alpha3 * js.rho ** 2
    return 2.0 * math.sqrt(masses.alpha1 * masses.alpha3) * wedge(js.xi, js.zeta) / Isq


def shape_height_and_rate(state: PhaseState, masses: MassTriple):
    """(z, dz/dt) computed exactly from positions and velocities."""
    js = jacobi_split(state, masses, pair=(1, 2))
    c = math.sqrt(masses.alpha1 * masses.alpha3)
    I = masses.alpha1 * js.r ** 2 + masses.alpha3 * js.rho ** 2
    w3 = c * wedge(js.xi, js.zeta)
    w3_dot = c * (wedge(js.xi_dot, js.zeta) + wedge(js.xi, js.zeta_dot))
    I_dot = 2.0 * masses.alpha1 * float(js.zeta @ js.zeta_dot) \
        + 2.0 * masses.alpha3 * float(js.xi @ js.xi_dot)
    z = 2.0 * w3 / I
    z_dot = 2.0 * w3_dot / I - 2.0 * w3 * I_dot / (I * I)
    return z, z_dot


def lagrange_height(masses: MassTriple) -> float:
    """Constant height of the equilateral shape; equals 1 for equal masses."""
    return math.sqrt(3.0) * math.sqrt(masses.alpha1 * masses.alpha3) \
        * masses.M / masses.pair_mass_sum


def equilateral_state(masses: MassTriple, side: float = 1.0,
                      orientation: int = +1) -> PhaseState:
    """Equilateral configuration at rest, barycenter at the origin.

    orientation +1 puts body 3 above the 1-2 base (positive height).
    """
    h = math.sqrt(3.0) / 2.0 * side * (1 if orientation >= 0 else -1)
    pos = np.array([[0.0, 0.0], [side, 0.0], [0.5 * side, h]])
    m = np.array(masses.masses)
    pos -= (m[:, None] * pos).sum(axis=0) / masses.M
    zeros = np.zeros((3, 2))
    return PhaseState.from_arrays(pos, zeros)


def configuration_from_shape(R: float, theta: float, phi: float,
                             masses: MassTriple) -> PhaseState:
    """A resting configuration with the given shape, barycenter at origin.

    Inverts the Hopf map with the gauge choice z1 real and nonnegative.
    """
    if R <= 0.0:
        raise ValueError("size R must be positive")
    half = 0.5 * R * R
    w1 = half * math.cos(phi) * math.cos(theta)
    w2 = half * math.cos(phi) * math.sin(theta)
    w3 = half * math.sin(phi)
    a = math.sqrt(max(half + w1, 0.0))       # |z1|
    if a > 1e-150:
        z1 = complex(a, 0.0)
        z2 = complex(w2, -w3) / a            # conj(z2) z1 = w2 + i w3
    else:
        z1 = complex(0.0, 0.0)
        z2 = complex(math.sqrt(2.0 * half), 0.0)
    zeta = np.array([z1.real, z1.imag]) / math.sqrt(masses.alpha1)
    xi = np.array([z2.real, z2.imag]) / math.sqrt(masses.alpha3)
    x_cm12 = -(masses.m3 / masses.M) * xi
    x3 = x_cm12 + xi
    x1 = x_cm12 + masses.mu2 * zeta
    x2 = x_cm12 - masses.mu1 * zeta
    zeros = np.zeros(2)
    return PhaseState(x1, x2, x3, zeros, zeros, zeros)


def collision_rays(masses: MassTriple) -> CollisionRays:
    """Locate the three binary-collision rays on the equator.

    Each ray longitude is found by pushing an exact collision configuration
    of the pair through shape_point; the constants lambda_k make the
    squared-distance relation exact.
    """
    thetas = []
    lams = []
    prods = []
    for k in (1, 2, 3):
        i, j = [b for b in (1, 2, 3) if b != k]
        mi, mj = masses.mass(i), masses.mass(j)
        pos = np.zeros((3, 2))
        pos[i - 1] = pos[j - 1] = np.array([0.0, 0.0])
        pos[k - 1] = np.array([1.0, 0.0])
        cm = np.array(masses.masses)[:, None] * pos
        pos -= cm.sum(axis=0) / masses.M
        sp = shape_point(PhaseState.from_arrays(pos, np.zeros((3, 2))), masses)
        if abs(sp.phi) > 1e-12:
            raise RuntimeError("collision ray off the equator")
        thetas.append(sp.theta)
        lams.append((mi + mj) / (2.0 * mi * mj))   # 1 / (2 alpha1 of the pair)
        prods.append(mi * mj)
    return CollisionRays(theta=tuple(thetas), lam=tuple(lams),
                         pair_mass_products=tuple(prods))


def potential_phi_derivative(shape: ShapePoint, masses: MassTriple,
                             rays: CollisionRays | None = None,
                             floor: float = TRIPLE_FLOOR) -> float:
    """dU/dphi at fixed (R, theta), from the squared-distance relations.

    With per-pair constants lambda_k the relation differentiates to
    ds_k/dphi = R^2 lambda_k gamma_k sin(phi), so
    dU/dphi = -(1/2) sin(phi) R^2 sum_k beta_k lambda_k gamma_k / r_ij^3.
    Vanishes on the equator (odd in phi).
    """
    rays = rays if rays is not None else collision_rays(masses)
    total = 0.0
    Rsq = shape.R * shape.R
    for k in (1, 2, 3):
        s_k = rays.squared_distance(k, shape.R, shape.theta, shape.phi)
        if s_k < floor * floor:
            raise BinaryCollision(f"pair opposite body {k} at collision")
        total += (rays.pair_mass_products[k - 1] * rays.lam[k - 1]
                  * rays.gamma(k, shape.theta)) / s_k ** 1.5
    return -0.5 * math.sin(shape.phi) * Rsq * total


def q_potential_term(shape: ShapePoint, masses: MassTriple,
                     rays: CollisionRays | None = None,
                     floor: float = TRIPLE_FLOOR) -> float:
    """The potential part of the oscillator coefficient.

    Equals (-4 cos(phi) / sin(phi)) dU/dphi with the sin(phi) cancelled
    analytically, so it is finite on the equator and even in phi:

        2 cos(phi) R^2 sum_k beta_k lambda_k gamma_k / r_ij^3.

    For a tight pair with the third body far away it grows like R^2.
    """
    rays = rays if rays is not None else collision_rays(masses)
    total = 0.0
    Rsq = shape.R * shape.R
    for k in (1, 2, 3):
        s_k = rays.squared_distance(k, shape.R, shape.theta, shape.phi)
        if s_k < floor * floor:
            raise BinaryCollision(f"pair opposite body {k} at collision")
        total += (rays.pair_mass_products[k - 1] * rays.lam[k - 1]
                  * rays.gamma(k, shape.theta)) / s_k ** 1.5
    return 2.0 * math.cos(shape.phi) * Rsq * total


@dataclass(frozen=True)
class SigmaSeries:
    """Samples of the rescaled-time representation of a trajectory.

    sigma is the new time with dt/dsigma = f and f = I; z is resampled on a
    uniform sigma grid; omega2 is the measured oscillator coefficient
    -z''(sigma)/z, NaN where |z| < z_floor or where the grid does not
    resolve the local oscillation.
    """

    sigma: np.ndarray
    t: np.ndarray
    z: np.ndarray
    f: np.ndarray
    omega2: np.ndarray
    z_floor: float

    def t_of_sigma(self, s):
        return np.interp(s, self.sigma, self.t)

    def sigma_of_t(self, t):
        return np.interp(t, self.t, self.sigma)

    def zero_crossings(self) -> np.ndarray:
        """sigma locations where z changes sign, spline-refined."""
        return _sign_change_roots(self.sigma, self.z)

    def omega2_defined(self) -> np.ndarray:
        return ~np.isnan(self.omega2)

    def omega2_negative_fraction(self) -> float:
        """Fraction of defined samples with measured omega2 < 0 (diagnostic)."""
        defined = self.omega2_defined()
        if not defined.any():
            return 0.0
        return float((self.omega2[defined] < 0.0).mean())


def _sign_change_roots(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Roots of a sampled function at its sign changes, cubic-refined."""
    s = np.sign(y)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    if len(idx) == 0:
        return np.array([])
    allroots = CubicSpline(x, y).roots(extrapolate=False)
    keep = []
    for i in idx:
        cand = allroots[(allroots >= x[i]) & (allroots <= x[i + 1])]
        if cand.size:
            keep.append(float(cand[0]))
        else:
            # fall back to linear interpolation on the bracket
            x0, x1 = x[i], x[i + 1]
            y0, y1 = y[i], y[i + 1]
            keep.append(float(x0 - y0 * (x1 - x0) / (y1 - y0)))
    return np.array(keep)


def sigma_series(trajectory, n: int = 4096,
                 z_floor: float = Z_FLOOR_DEFAULT,
                 window: tuple[float, float] | None = None,
                 savgol_window: int = 21) -> SigmaSeries:
    """Build the rescaled-time series of a trajectory.

    `window` restricts to a time interval (defaults to the whole span).
    sigma(t) = integral dt / I is accumulated by the trapezoid rule on a
    dense grid, z is respline-sampled on a uniform sigma grid, and omega2
    is measured with a smoothed second derivative.  Samples where the
    uniform grid underresolves the local oscillation (zero crossings closer
    than 8 grid steps) are also marked undefined.
    """
    t0, t1 = window if window is not None else (trajectory.t0, trajectory.t_final)
    ts = np.linspace(t0, t1, n)
    series = trajectory.series(ts)
    I = series.I
    z = series.z
    inv = 1.0 / I
    sigma_t = np.concatenate(
        [[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(ts))])
    sig = np.linspace(0.0, sigma_t[-1], n)
    t_of_sig = np.interp(sig, sigma_t, ts)
    z_sig = CubicSpline(sigma_t, z)(sig)
    f_sig = CubicSpline(sigma_t, I)(sig)

    dsig = sig[1] - sig[0] if n > 1 else 1.0
    win = min(savgol_window if savgol_window % 2 == 1 else savgol_window + 1,
              n - 1 if (n - 1) % 2 == 1 else n - 2)
    if win >= 5:
        z2 = savgol_filter(z_sig, win, polyorder=4, deriv=2, delta=dsig)
    else:
        z2 = np.gradient(np.gradient(z_sig, dsig), dsig)
    with np.errstate(divide="ignore", invalid="ignore"):
        omega2 = -z2 / z_sig
    omega2 = np.where(np.abs(z_sig) < z_floor, np.nan, omega2)

    # mask stretches where crossings come closer than 8 grid steps
    crossings = _sign_change_roots(sig, z_sig)
    if crossings.size >= 2:
        gaps = np.diff(crossings)
        bad = np.nonzero(gaps < 8.0 * dsig)[0]
        for b in bad:
            lo, hi = crossings[b], crossings[b + 1]
            omega2[(sig >= lo - dsig) & (sig <= hi + dsig)] = np.nan

    return SigmaSeries(sigma=sig, t=t_of_sig, z=z_sig, f=f_sig,
                       omega2=omega2, z_floor=z_floor)
