"""Mass bookkeeping, accelerations, conserved quantities, Jacobi splits,
and the exact energy decomposition."""

import math

import numpy as np
import pytest
from scipy.stats import linregress

from syzygylab import MassTriple, PhaseState, accelerations, conserved
from syzygylab.dynamics import (coupling_formula, coupling_gradient_xi,
                                energy_split, jacobi_size_squared,
                                jacobi_split, potential, relative_energy)
from syzygylab.errors import CollisionSingularity
from syzygylab.shape import equilateral_state


def random_state(rng, scale=2.0, zero_momentum=False, masses=None):
    pos = rng.standard_normal((3, 2)) * scale
    vel = rng.standard_normal((3, 2))
    if zero_momentum:
        m = np.array(masses.masses)
        vel -= (m[:, None] * vel).sum(axis=0) / m.sum()
    return PhaseState.from_arrays(pos, vel)


def test_mass_triple_derived_constants():
    m = MassTriple(0.7, 1.9, 3.1)
    assert m.mu1 + m.mu2 == 1.0
    assert m.beta3 / m.alpha3 == m.M          # exact identity
    assert m.alpha1 == pytest.approx(0.7 * 1.9 / 2.6, rel=1e-15)
    assert m.pair_mass_sum == pytest.approx(0.7 * 1.9 + 0.7 * 3.1 + 1.9 * 3.1)


def test_mass_triple_rejects_nonpositive():
    with pytest.raises(ValueError):
        MassTriple(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        MassTriple(1.0, -2.0, 1.0)


def test_accelerations_equilateral_equal_masses(masses_equal):
    state = equilateral_state(masses_equal, side=1.0)
    acc = accelerations(state, masses_equal)
    mags = np.linalg.norm(acc, axis=1)
    assert mags == pytest.approx([math.sqrt(3.0)] * 3, rel=1e-14)
    # each acceleration points at the barycenter (the origin here)
    for i in range(3):
        x = state.positions()[i]
        cosang = float(acc[i] @ (-x)) / (mags[i] * np.linalg.norm(x))
        assert cosang == pytest.approx(1.0, abs=1e-14)


def test_accelerations_collision_raises(masses_equal):
    state = PhaseState([0, 0], [0, 0], [1, 1],
                       [0, 0], [0, 0], [0, 0])
    with pytest.raises(CollisionSingularity):
        accelerations(state, masses_equal)


def test_accelerations_match_potential_gradient(masses_unequal, rng):
    h = 1e-6
    for _ in range(5):
        state = random_state(rng)
        acc = accelerations(state, masses_unequal)
        for i in range(3):
            for axis in range(2):
                pos_p = state.positions()
                pos_m = state.positions()
                pos_p[i, axis] += h
                pos_m[i, axis] -= h
                up = potential(PhaseState.from_arrays(pos_p, np.zeros((3, 2))),
                               masses_unequal)
                dn = potential(PhaseState.from_arrays(pos_m, np.zeros((3, 2))),
                               masses_unequal)
                grad = (up - dn) / (2 * h) / masses_unequal.masses[i]
                assert grad == pytest.approx(acc[i, axis], rel=1e-6, abs=1e-8)


def test_conserved_at_rest(masses_equal):
    state = PhaseState([0, 0], [1, 0], [0, 1],
                       [0, 0], [0, 0], [0, 0])
    c = conserved(state, masses_equal)
    assert c.K == 0.0
    assert c.J == 0.0
    assert np.all(c.P == 0.0)
    assert c.H == -c.U


def test_conserved_inertia_example(masses_equal):
    state = PhaseState([0, 0], [1, 0], [0, 1],
                       [0, 0], [0, 0], [0, 0])
    assert conserved(state, masses_equal).I == pytest.approx(4.0 / 3.0,
                                                             rel=1e-15)


def test_equal_mass_potential_bounded_by_min_distance(masses_equal, rng):
    for _ in range(20):
        state = random_state(rng)
        c = conserved(state, masses_equal)
        assert c.U <= 3.0 * 1.0 / c.r_min + 1e-12


def test_jacobi_split_example(masses_equal):
    state = PhaseState([0, 0], [1, 0], [0, 1],
                       [0, 0], [0, 0], [0, 0])
    js = jacobi_split(state, masses_equal, pair=(1, 2))
    assert js.zeta == pytest.approx([-1.0, 0.0])
    assert js.xi == pytest.approx([-0.5, 1.0])
    assert jacobi_size_squared(js, masses_equal) == pytest.approx(4.0 / 3.0,
                                                                  rel=1e-14)


def test_jacobi_translation_invariance(masses_unequal, rng):
    state = random_state(rng)
    js = jacobi_split(state, masses_unequal, pair=(1, 2))
    js2 = jacobi_split(state.translated([3.7, -1.2]), masses_unequal,
                       pair=(1, 2))
    assert js2.zeta == pytest.approx(js.zeta, abs=1e-12)
    assert js2.xi == pytest.approx(js.xi, abs=1e-12)


@pytest.mark.parametrize("pair", [(1, 2), (2, 3), (1, 3)])
def test_jacobi_distance_reconstruction(pair, masses_unequal, rng):
    # the recovered outer distances must match direct point distances
    for _ in range(20):
        state = random_state(rng)
        js = jacobi_split(state, masses_unequal, pair=pair)
        i, j, k = js.pair
        r_ij, r_ik, r_jk = js.recovered_distances()
        assert r_ij == pytest.approx(state.pair_distance(i, j), rel=1e-12)
        assert r_ik == pytest.approx(state.pair_distance(i, k), rel=1e-12)
        assert r_jk == pytest.approx(state.pair_distance(j, k), rel=1e-12)


@pytest.mark.parametrize("pair", [(1, 2), (2, 3), (1, 3)])
def test_size_identity_all_pairs(pair, masses_unequal, rng):
    for _ in range(20):
        state = random_state(rng)
        js = jacobi_split(state, masses_unequal, pair=pair)
        I = conserved(state, masses_unequal).I
        assert jacobi_size_squared(js, masses_unequal) == pytest.approx(
            I, rel=1e-12)


def test_jacobi_default_pair_is_closest(masses_equal):
    state = PhaseState([0, 0], [0.1, 0], [5, 5],
                       [0, 0], [0, 0], [0, 0])
    js = jacobi_split(state, masses_equal)
    assert frozenset(js.pair[:2]) == frozenset({1, 2})


def test_energy_split_identity(masses_unequal, rng):
    # on zero-momentum states the relative energy is the full energy
    for _ in range(50):
        state = random_state(rng, zero_momentum=True, masses=masses_unequal)
        js = jacobi_split(state, masses_unequal)
        es = energy_split(js, masses_unequal)
        H = conserved(state, masses_unequal).H
        assert es.H12 + es.H3 + es.g == pytest.approx(H, rel=1e-12)
        assert es.H_relative == pytest.approx(H, rel=1e-12)


def test_energy_split_three_term_crosscheck(masses_unequal, rng):
    for _ in range(20):
        state = random_state(rng, zero_momentum=True, masses=masses_unequal)
        js = jacobi_split(state, masses_unequal)
        es = energy_split(js, masses_unequal)
        assert coupling_formula(js, masses_unequal) == pytest.approx(
            es.g, rel=1e-9, abs=1e-13)


def test_energy_split_velocity_decomposition(masses_unequal, rng):
    state = random_state(rng)
    js = jacobi_split(state, masses_unequal)
    es = energy_split(js, masses_unequal)
    back = es.nu * js.xi / js.rho + es.V_perp
    assert back == pytest.approx(js.xi_dot, abs=1e-13)
    assert float(es.V_perp @ js.xi) == pytest.approx(0.0, abs=1e-12)


def _fixed_pair_split(masses, zeta, xi):
    """JacobiState for explicit pair and outer vectors (at rest)."""
    x_cm12 = -(masses.m3 / masses.M) * xi
    x3 = x_cm12 + xi
    x1 = x_cm12 + masses.mu2 * zeta
    x2 = x_cm12 - masses.mu1 * zeta
    state = PhaseState(x1, x2, x3, np.zeros(2), np.zeros(2), np.zeros(2))
    return jacobi_split(state, masses, pair=(1, 2))


def test_coupling_decay_quadrupole(masses_unequal):
    """At fixed pair geometry the remainder decays like rho^-3.

    The dipole contribution cancels exactly because the outer vector is
    anchored at the pair's barycenter, so the measured log-log slope is -3
    (one power faster than the r/rho^2 envelope).
    """
    zeta = np.array([0.3, 0.4])
    direction = np.array([math.cos(0.7), math.sin(0.7)])
    rhos = np.logspace(2, 4, 25)
    gs = []
    for rho in rhos:
        js = _fixed_pair_split(masses_unequal, zeta, rho * direction)
        gs.append(abs(coupling_formula(js, masses_unequal)))
    slope = linregress(np.log(rhos), np.log(gs)).slope
    assert slope == pytest.approx(-3.0, abs=0.1)


def test_coupling_envelope_bound(masses_unequal):
    # |g| <= C (r/rho) / rho: the scaled quantity |g| rho^2 / r stays bounded
    zeta = np.array([0.3, 0.4])
    direction = np.array([math.cos(0.7), math.sin(0.7)])
    worst = 0.0
    for rho in np.logspace(1, 4, 40):
        js = _fixed_pair_split(masses_unequal, zeta, rho * direction)
        scaled = abs(coupling_formula(js, masses_unequal)) * rho ** 2 / js.r
        worst = max(worst, scaled)
    assert worst < 10.0 * masses_unequal.M


def test_coupling_gradient_matches_finite_differences(masses_unequal):
    zeta = np.array([0.3, 0.4])
    xi = np.array([5.0, 2.0])
    js = _fixed_pair_split(masses_unequal, zeta, xi)
    grad = coupling_gradient_xi(js, masses_unequal)
    h = 1e-6
    for axis in range(2):
        dp = np.zeros(2)
        dp[axis] = h
        gp = coupling_formula(_fixed_pair_split(masses_unequal, zeta, xi + dp),
                              masses_unequal)
        gm = coupling_formula(_fixed_pair_split(masses_unequal, zeta, xi - dp),
                              masses_unequal)
        assert (gp - gm) / (2 * h) == pytest.approx(grad[axis], rel=1e-6)


def test_coupling_gradient_decay(masses_unequal):
    """The gradient of the remainder decays like rho^-4 at fixed pair."""
    zeta = np.array([0.3, 0.4])
    direction = np.array([math.cos(0.7), math.sin(0.7)])
    rhos = np.logspace(2, 4, 25)
    gs = []
    for rho in rhos:
        js = _fixed_pair_split(masses_unequal, zeta, rho * direction)
        gs.append(np.linalg.norm(coupling_gradient_xi(js, masses_unequal)))
    slope = linregress(np.log(rhos), np.log(gs)).slope
    assert slope == pytest.approx(-4.0, abs=0.15)


def test_relative_energy_drops_barycenter_drift(masses_unequal, rng):
    state = random_state(rng, zero_momentum=True, masses=masses_unequal)
    boosted = state.boosted([0.8, -0.3])
    js0 = jacobi_split(state, masses_unequal)
    js1 = jacobi_split(boosted, masses_unequal)
    assert relative_energy(js1, masses_unequal) == pytest.approx(
        relative_energy(js0, masses_unequal), rel=1e-12)
