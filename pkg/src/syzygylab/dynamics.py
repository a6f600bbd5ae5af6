"""Newtonian planar three-body dynamics in G = 1 units.

Provides the mass bookkeeping (reduced masses and their exact identities),
phase-space states, accelerations, conserved quantities, the Jacobi
decomposition into a tight pair plus an outer body, and the exact splitting
of the total energy into two Kepler energies and a coupling remainder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CollisionSingularity

# Ordered pair conventions.  Each entry (i, j, k) is an even permutation of
# (1, 2, 3): the pair vector is x_i - x_j and the outer body is k.  Even
# ordering keeps the orientation (and hence the shape height) identical
# across pair choices.
ORDERED_PAIRS = ((1, 2, 3), (2, 3, 1), (3, 1, 2))

HARD_DISTANCE_FLOOR = 1e-12


def _as_vec(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (2,):
        raise ValueError(f"expected a planar vector, got shape {a.shape}")
    return a


def wedge(a: np.ndarray, b: np.ndarray) -> float:
    """Scalar cross product a_x b_y - a_y b_x of two planar vectors."""
    return float(a[0] * b[1] - a[1] * b[0])


@dataclass(frozen=True)
class MassTriple:
    """Three positive masses and the derived two-body constants.

    Exact identities: mu1 + mu2 = 1 and beta3 / alpha3 = M.
    """

    m1: float
    m2: float
    m3: float

    def __post_init__(self):
        for name in ("m1", "m2", "m3"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"mass {name} must be positive")

    @property
    def masses(self) -> tuple[float, float, float]:
        return (self.m1, self.m2, self.m3)

    @property
    def M(self) -> float:
        return self.m1 + self.m2 + self.m3

    @property
    def mu1(self) -> float:
        return self.m1 / (self.m1 + self.m2)

    @property
    def mu2(self) -> float:
        return self.m2 / (self.m1 + self.m2)

    @property
    def alpha1(self) -> float:
        return self.m1 * self.m2 / (self.m1 + self.m2)

    @property
    def alpha3(self) -> float:
        return (self.m1 + self.m2) * self.m3 / self.M

    @property
    def beta1(self) -> float:
        return self.m1 * self.m2

    @property
    def beta3(self) -> float:
        return (self.m1 + self.m2) * self.m3

    @property
    def pair_mass_sum(self) -> float:
        """Sum of the pairwise mass products m1 m2 + m1 m3 + m2 m3."""
        return self.m1 * self.m2 + self.m1 * self.m3 + self.m2 * self.m3

    def mass(self, i: int) -> float:
        return self.masses[i - 1]

    def ordered_pair(self, pair) -> tuple[int, int, int]:
        """Canonicalize a pair {i, j} to the even permutation (i, j, k)."""
        s = frozenset(pair)
        for trip in ORDERED_PAIRS:
            if frozenset(trip[:2]) == s:
                return trip
        raise ValueError(f"not a body pair: {pair!r}")

    def pair_constants(self, pair) -> "PairConstants":
        """Reduced masses for the split with pair (i, j) tight and k outer."""
        i, j, k = self.ordered_pair(pair)
        mi, mj, mk = self.mass(i), self.mass(j), self.mass(k)
        return PairConstants(
            i=i, j=j, k=k,
            alpha1=mi * mj / (mi + mj),
            alpha3=(mi + mj) * mk / self.M,
            beta1=mi * mj,
            beta3=(mi + mj) * mk,
            mu_i=mi / (mi + mj),
            mu_j=mj / (mi + mj),
        )


@dataclass(frozen=True)
class PairConstants:
    i: int
    j: int
    k: int
    alpha1: float
    alpha3: float
    beta1: float
    beta3: float
    mu_i: float
    mu_j: float


@dataclass(frozen=True)
class PhaseState:
    """Planar positions and velocities of the three bodies at time t.

    Arrays are length-2 float vectors; treat instances as immutable values.
    """

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("x1", "x2", "x3", "v1", "v2", "v3"):
            object.__setattr__(self, name, _as_vec(getattr(self, name)))

    @classmethod
    def from_arrays(cls, positions, velocities, t: float = 0.0) -> "PhaseState":
        p = np.asarray(positions, dtype=float).reshape(3, 2)
        v = np.asarray(velocities, dtype=float).reshape(3, 2)
        return cls(p[0], p[1], p[2], v[0], v[1], v[2], t)

    def positions(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3])

    def velocities(self) -> np.ndarray:
        return np.array([self.v1, self.v2, self.v3])

    def position(self, i: int) -> np.ndarray:
        return (self.x1, self.x2, self.x3)[i - 1]

    def velocity(self, i: int) -> np.ndarray:
        return (self.v1, self.v2, self.v3)[i - 1]

    def pair_distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.position(i) - self.position(j)))

    def pair_distances(self) -> tuple[float, float, float]:
        """(r12, r23, r31)."""
        return (self.pair_distance(1, 2), self.pair_distance(2, 3),
                self.pair_distance(3, 1))

    def min_pair_distance(self) -> float:
        return min(self.pair_distances())

    def closest_pair(self) -> tuple[int, int, int]:
        d = self.pair_distances()
        return ORDERED_PAIRS[int(np.argmin(d))]

    def time_reversed(self) -> "PhaseState":
        """Same positions, flipped velocities."""
        return PhaseState(self.x1, self.x2, self.x3,
                          -self.v1, -self.v2, -self.v3, self.t)

    def translated(self, d) -> "PhaseState":
        d = _as_vec(d)
        return PhaseState(self.x1 + d, self.x2 + d, self.x3 + d,
                          self.v1, self.v2, self.v3, self.t)

    def boosted(self, dv) -> "PhaseState":
        dv = _as_vec(dv)
        return PhaseState(self.x1, self.x2, self.x3,
                          self.v1 + dv, self.v2 + dv, self.v3 + dv, self.t)

    def rotated(self, angle: float) -> "PhaseState":
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        return PhaseState(*(rot @ x for x in (self.x1, self.x2, self.x3)),
                          *(rot @ v for v in (self.v1, self.v2, self.v3)),
                          self.t)

    def reflected(self) -> "PhaseState":
        """Reflect the plane about the x axis (y -> -y)."""
        flip = np.array([1.0, -1.0])
        return PhaseState(self.x1 * flip, self.x2 * flip, self.x3 * flip,
                          self.v1 * flip, self.v2 * flip, self.v3 * flip,
                          self.t)

    def scaled(self, c: float) -> "PhaseState":
        """Scale positions by c (velocities untouched)."""
        return PhaseState(c * self.x1, c * self.x2, c * self.x3,
                          self.v1, self.v2, self.v3, self.t)


@dataclass(frozen=True)
class ConservedSet:
    """First integrals and size measures of a single state."""

    H: float
    K: float
    U: float
    J: float
    P: np.ndarray
    I: float
    R: float
    r_min: float


@dataclass(frozen=True)
class JacobiState:
    """Pair vector zeta = x_i - x_j and outer vector xi = x_k - cm_ij.

    `pair` is the even-ordered triple (i, j, k).  The outer distances are
    recoverable as r_ik = |xi - mu_j zeta| and r_jk = |xi + mu_i zeta|.
    """

    zeta: np.ndarray
    xi: np.ndarray
    zeta_dot: np.ndarray
    xi_dot: np.ndarray
    r: float
    rho: float
    pair: tuple[int, int, int]
    mu_i: float
    mu_j: float

    def recovered_distances(self) -> tuple[float, float, float]:
        """(r_ij, r_ik, r_jk) computed from the Jacobi vectors."""
        r_ik = float(np.linalg.norm(self.xi - self.mu_j * self.zeta))
        r_jk = float(np.linalg.norm(self.xi + self.mu_i * self.zeta))
        return (self.r, r_ik, r_jk)


@dataclass(frozen=True)
class EnergySplit:
    """Two-body energies of the split plus the exact coupling remainder.

    H12 + H3 + g equals the energy of the relative motion exactly (for a
    state with zero total momentum this is the full energy H).
    """

    H12: float
    H3: float
    g: float
    J12: float
    nu: float
    V_perp: np.ndarray
    H_relative: float


def accelerations(state: PhaseState, masses: MassTriple,
                  floor: float = HARD_DISTANCE_FLOOR) -> np.ndarray:
    """Gravitational accelerations of the three bodies, shape (3, 2)."""
    pos = state.positions()
    m = masses.masses
    acc = np.zeros((3, 2))
    for a in range(3):
        for b in range(a + 1, 3):
            dv = pos[b] - pos[a]
            r = math.hypot(dv[0], dv[1])
            if r < floor:
                raise CollisionSingularity(
                    f"bodies {a + 1} and {b + 1} within {floor}")
            inv3 = 1.0 / (r * r * r)
            acc[a] += m[b] * dv * inv3
            acc[b] -= m[a] * dv * inv3
    return acc


def potential(state: PhaseState, masses: MassTriple) -> float:
    """U = sum of m_i m_j / r_ij (positive; +inf on collision states)."""
    r12, r23, r31 = state.pair_distances()
    m1, m2, m3 = masses.masses
    with np.errstate(divide="ignore"):
        terms = []
        for mm, r in ((m1 * m2, r12), (m2 * m3, r23), (m3 * m1, r31)):
            terms.append(mm / r if r > 0.0 else math.inf)
    return float(sum(terms))


def kinetic_energy(state: PhaseState, masses: MassTriple) -> float:
    m1, m2, m3 = masses.masses
    return 0.5 * float(m1 * state.v1 @ state.v1 + m2 * state.v2 @ state.v2
                       + m3 * state.v3 @ state.v3)


def center_of_mass(state: PhaseState, masses: MassTriple):
    m1, m2, m3 = masses.masses
    M = masses.M
    x_cm = (m1 * state.x1 + m2 * state.x2 + m3 * state.x3) / M
    v_cm = (m1 * state.v1 + m2 * state.v2 + m3 * state.v3) / M
    return x_cm, v_cm


def moment_of_inertia(state: PhaseState, masses: MassTriple) -> float:
    """I = sum m_i m_j r_ij^2 / M, the size measure about the barycenter."""
    r12, r23, r31 = state.pair_distances()
    m1, m2, m3 = masses.masses
    return (m1 * m2 * r12 ** 2 + m2 * m3 * r23 ** 2 + m3 * m1 * r31 ** 2) / masses.M


def angular_momentum(state: PhaseState, masses: MassTriple) -> float:
    """Scalar angular momentum about the center of mass."""
    x_cm, v_cm = center_of_mass(state, masses)
    total = 0.0
    for m, x, v in zip(masses.masses,
                       (state.x1, state.x2, state.x3),
                       (state.v1, state.v2, state.v3)):
        total += m * wedge(x - x_cm, v - v_cm)
    return float(total)


def conserved(state: PhaseState, masses: MassTriple) -> ConservedSet:
    """All first integrals and size measures of a state."""
    m1, m2, m3 = masses.masses
    K = kinetic_energy(state, masses)
    U = potential(state, masses)
    P = m1 * state.v1 + m2 * state.v2 + m3 * state.v3
    J = angular_momentum(state, masses)
    I = moment_of_inertia(state, masses)
    return ConservedSet(H=K - U, K=K, U=U, J=J, P=P, I=I,
                        R=math.sqrt(I), r_min=state.min_pair_distance())


def jacobi_split(state: PhaseState, masses: MassTriple,
                 pair=None) -> JacobiState:
    """Split the configuration into a tight pair and the outer body.

    With `pair` omitted the pair realizing the minimum distance is used.
    Accepted pairs are {1,2}, {2,3}, {1,3}; each is canonicalized to the
    even permutation (i, j, k), so e.g. pair (1, 3) uses zeta = x3 - x1.
    """
    trip = state.closest_pair() if pair is None else masses.ordered_pair(pair)
    i, j, k = trip
    pc = masses.pair_constants((i, j))
    xi_, xj, xk = state.position(i), state.position(j), state.position(k)
    vi, vj, vk = state.velocity(i), state.velocity(j), state.velocity(k)
    zeta = xi_ - xj
    zeta_dot = vi - vj
    xi = xk - (pc.mu_i * xi_ + pc.mu_j * xj)
    xi_dot = vk - (pc.mu_i * vi + pc.mu_j * vj)
    return JacobiState(zeta=zeta, xi=xi, zeta_dot=zeta_dot, xi_dot=xi_dot,
                       r=float(np.linalg.norm(zeta)),
                       rho=float(np.linalg.norm(xi)),
                       pair=trip, mu_i=pc.mu_i, mu_j=pc.mu_j)


def jacobi_size_squared(js: JacobiState, masses: MassTriple) -> float:
    """alpha1 r^2 + alpha3 rho^2 for the split's pair; equals I exactly."""
    pc = masses.pair_constants(js.pair[:2])
    return pc.alpha1 * js.r ** 2 + pc.alpha3 * js.rho ** 2


def relative_energy(js: JacobiState, masses: MassTriple) -> float:
    """Energy of the relative motion (full H minus the drift term M|v_cm|^2/2)."""
    pc = masses.pair_constants(js.pair[:2])
    mi, mj, mk = (masses.mass(js.pair[0]), masses.mass(js.pair[1]),
                  masses.mass(js.pair[2]))
    r_ij, r_ik, r_jk = js.recovered_distances()
    U = mi * mj / r_ij + mi * mk / r_ik + mj * mk / r_jk
    K = 0.5 * pc.alpha1 * float(js.zeta_dot @ js.zeta_dot) \
        + 0.5 * pc.alpha3 * float(js.xi_dot @ js.xi_dot)
    return K - U


def energy_split(js: JacobiState, masses: MassTriple) -> EnergySplit:
    """Split the relative energy as H12 + H3 + g with g the exact difference.

    The remainder g equals beta3/rho minus the outer body's true attraction
    to the two pair members; `coupling_formula` evaluates that three-term
    expression directly as a cross-check.
    """
    pc = masses.pair_constants(js.pair[:2])
    H12 = 0.5 * pc.alpha1 * float(js.zeta_dot @ js.zeta_dot) - pc.beta1 / js.r
    H3 = 0.5 * pc.alpha3 * float(js.xi_dot @ js.xi_dot) - pc.beta3 / js.rho
    H_rel = relative_energy(js, masses)
    g = H_rel - H12 - H3
    J12 = pc.alpha1 * wedge(js.zeta, js.zeta_dot)
    xi_hat = js.xi / js.rho
    nu = float(xi_hat @ js.xi_dot)
    V_perp = js.xi_dot - nu * xi_hat
    return EnergySplit(H12=H12, H3=H3, g=g, J12=J12, nu=nu,
                       V_perp=V_perp, H_relative=H_rel)


def coupling_formula(js: JacobiState, masses: MassTriple) -> float:
    """Three-term closed form of the coupling remainder g.

    g = beta3/rho - m_i m_k / r_ik - m_j m_k / r_jk.  The would-be dipole
    contribution cancels exactly because xi is measured from the pair's
    center of mass, so g decays like the quadrupole, O(r^2 / rho^3).
    """
    pc = masses.pair_constants(js.pair[:2])
    mi, mj, mk = (masses.mass(js.pair[0]), masses.mass(js.pair[1]),
                  masses.mass(js.pair[2]))
    _, r_ik, r_jk = js.recovered_distances()
    return pc.beta3 / js.rho - mi * mk / r_ik - mj * mk / r_jk


def coupling_gradient_xi(js: JacobiState, masses: MassTriple) -> np.ndarray:
    """Gradient of the coupling remainder g with respect to xi."""
    pc = masses.pair_constants(js.pair[:2])
    mi, mj, mk = (masses.mass(js.pair[0]), masses.mass(js.pair[1]),
                  masses.mass(js.pair[2]))
    d_ik = js.xi - js.mu_j * js.zeta
    d_jk = js.xi + js.mu_i * js.zeta
    r_ik = np.linalg.norm(d_ik)
    r_jk = np.linalg.norm(d_jk)
    return (-pc.beta3 * js.xi / js.rho ** 3
            + mi * mk * d_ik / r_ik ** 3
            + mj * mk * d_jk / r_jk ** 3)
