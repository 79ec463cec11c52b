import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from lasersim.closed_forms import (
    PureDeathDistribution,
    atom_block,
    atom_block_evolve,
    below_threshold_linear_entropy,
    below_threshold_von_neumann,
    displaced_vacuum_population,
    equilibrium_atom,
    expm_small,
    lasing_linear_entropy,
    lasing_mean_photon,
    lasing_von_neumann,
    limit_cycle_state,
    linear_equilibrium,
    poisson_limit,
    pure_death,
    stationary_state,
)
from lasersim.errors import RegimeError
from lasersim.hilbert import SpaceSpec, make_operators, weyl_field
from lasersim.lindblad import ConstantDriveGenerator, DensityMatrix, evolve, generator_driven, DriveFunctions
from lasersim.observables import mean_value
from lasersim.params import LaserParams

LASING = LaserParams(1.0, 1.0, 0.5, 2.0)


def atom_rhs(p, beta):
    """2x2 atomic generator written out from the jump operators."""
    sm = np.array([[0, 0], [1, 0]], complex)
    sp = sm.T.copy()
    s3 = np.diag([1.0, -1.0])
    km, kp = p.gamma * (1 - p.d), p.gamma * (1 + p.d)

    def D(L, r):
        LdL = L.conj().T @ L
        return L @ r @ L.conj().T - 0.5 * (LdL @ r + r @ LdL)

    X = np.conj(beta) * sm - beta * sp - 0.5j * p.omega * s3

    def f(t, y):
        r = y.reshape(2, 2)
        return (km * D(sm, r) + kp * D(sp, r) + X @ r - r @ X).ravel()

    return f


def test_stationary_examples():
    sp = SpaceSpec(6)
    rho = stationary_state(LaserParams(1, 1, 0.0, 1), sp)
    assert np.allclose(rho.entries[:2, :2], np.eye(2) / 2)
    rho = stationary_state(LaserParams(1, 1, 0.5, 1), sp)
    assert rho.entries[0, 0] == 0.75 and rho.entries[1, 1] == 0.25
    ops = make_operators(sp)
    assert mean_value(rho, ops.sigma_3) == pytest.approx(0.5)
    assert mean_value(rho, ops.N) == 0 and mean_value(rho, ops.a) == 0
    assert rho.hygiene().ok()


def test_limit_cycle_examples():
    sp = SpaceSpec(24)
    ops = make_operators(sp)
    rho = limit_cycle_state(LASING, 0.0, 0.9, sp)
    A = mean_value(rho, ops.a)
    assert abs(A) == pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-12)
    assert np.angle(A) == pytest.approx(0.9, abs=1e-12)
    assert mean_value(rho, ops.sigma_3).real == pytest.approx(0.25, abs=1e-14)
    field = rho.entries[0::2, 0::2] + rho.entries[1::2, 1::2]
    assert np.trace(field @ field).real == pytest.approx(1.0, abs=1e-12)
    assert rho.hygiene().ok()
    with pytest.raises(RegimeError):
        limit_cycle_state(LaserParams(1, 1, 0.2, 2), 0.0, 0.0, sp)


def test_limit_cycle_rotates_with_omega():
    p = LaserParams(1.0, 1.0, 0.5, 2.0, omega=0.4)
    sp = SpaceSpec(20)
    t = 2.0
    A = mean_value(limit_cycle_state(p, t, 0.3, sp), make_operators(sp).a)
    assert np.angle(A) == pytest.approx(0.3 - 0.4 * t, abs=1e-12)


def test_linear_equilibrium_examples():
    sp = SpaceSpec(24)
    p = LaserParams(1.0, 1.0, 0.4, 1.0, omega=0.3)
    assert np.allclose(linear_equilibrium(p, 0, 0, sp).entries, stationary_state(p, sp).entries)
    b0 = 0.3 - 0.2j
    atom = equilibrium_atom(p, b0)
    den = 1 + 0.09 + 2 * abs(b0) ** 2
    assert atom[0, 1] == pytest.approx(0.4 * b0 * (1 - 0.3j) / den, abs=1e-15)
    a0 = 0.2 + 0.1j
    rho = linear_equilibrium(p, a0, b0, sp)
    res = generator_driven(rho, p, DriveFunctions.constant(a0, b0), 0.0)
    assert np.max(np.abs(res)) < 1e-10
    assert rho.hygiene().ok()


def test_lyapunov_identity():
    for beta in (0, 0.3 + 0.4j, -2.0j):
        sol = atom_block(LaserParams(1.0, 0.7, 0.2, 1.0, omega=0.9), beta)
        assert sol.lyapunov_defect() < 1e-12


def test_atom_block_equilibrium_is_fixed():
    p = LaserParams(1.0, 0.7, 0.2, 1.0, omega=0.9)
    sol = atom_block(p, 0.3 + 0.1j)
    assert np.max(np.abs(sol.matrix3 @ sol.equilibrium3 + sol.forcing3)) < 1e-14


def test_atom_block_relaxation_beta_zero():
    p = LaserParams(1.0, 0.8, 0.5, 1.0)
    for t in (0.0, 0.3, 2.0):
        r = atom_block_evolve(np.diag([1.0, 0.0]), p, 0, t)
        # population difference relaxes to d at rate 2 gamma from 1
        diff = p.d + (1 - p.d) * math.exp(-2 * p.gamma * t)
        assert (r[0, 0] - r[1, 1]).real == pytest.approx(diff, abs=1e-14)


@settings(max_examples=15, deadline=None)
@given(
    br=st.floats(-1, 1), bi=st.floats(-1, 1), t=st.floats(0, 5),
    w=st.floats(-1, 1), d=st.floats(-0.9, 0.9),
)
def test_atom_block_vs_ode(br, bi, t, w, d):
    p = LaserParams(1.0, 0.6, d, 1.0, omega=w)
    beta = complex(br, bi)
    r0 = np.array([[0.3, 0.2 + 0.1j], [0.2 - 0.1j, 0.7]])
    exact = atom_block_evolve(r0, p, beta, t)
    if t > 0:
        sol = solve_ivp(atom_rhs(p, beta), (0, t), r0.ravel(), method="DOP853", rtol=1e-13, atol=1e-14)
        ref = sol.y[:, -1].reshape(2, 2)
    else:
        ref = r0
    assert np.max(np.abs(exact - ref)) < 1e-10
    assert abs(np.trace(exact) - 1) < 1e-14


def test_atom_block_matches_full_evolution():
    p = LaserParams(1.0, 1.0, 0.5, 2.0, omega=0.2)
    sp = SpaceSpec(4)
    r0 = np.array([[0.3, 0.2 + 0.1j], [0.2 - 0.1j, 0.7]])
    vac = np.zeros((sp.n_levels, sp.n_levels))
    vac[0, 0] = 1
    b0 = 0.4 - 0.3j
    ev = evolve(DensityMatrix.product(vac, r0, sp), ConstantDriveGenerator(p, sp, 0, b0), 2.0, dt=1e-3)
    assert np.max(np.abs(ev.final.entries[:2, :2] - atom_block_evolve(r0, p, b0, 2.0))) < 1e-10


def test_atom_block_long_time_limit():
    p = LaserParams(1.0, 1.0, 0.5, 2.0, omega=0.3)
    r = atom_block_evolve(np.diag([0.0, 1.0]), p, 0.2j, 60.0)
    assert np.max(np.abs(r - equilibrium_atom(p, 0.2j))) < 1e-14


def test_expm_small_fallback():
    J = np.array([[1.0, 1.0, 0], [0, 1.0, 0], [0, 0, 2.0]])  # defective
    assert np.allclose(expm_small(J, 0.7), expm(0.7 * J), atol=1e-13)


def kolmogorov(n, kappa, t):
    Q = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        Q[j, j] = -2 * kappa * j
        if j < n:
            Q[j, j + 1] = 2 * kappa * (j + 1)
    p0 = np.zeros(n + 1)
    p0[n] = 1
    sol = solve_ivp(lambda s, y: Q @ y, (0, t), p0, method="DOP853", rtol=1e-13, atol=1e-15)
    return sol.y[:, -1]


@pytest.mark.parametrize("n", [0, 1, 2, 5, 10])
def test_pure_death_vs_kolmogorov(n):
    for t in (0.1, 0.5, 2.0):
        assert np.max(np.abs(pure_death(n, 0.7, t) - kolmogorov(n, 0.7, t))) < 1e-10


def test_pure_death_examples():
    assert np.array_equal(pure_death(3, 1.0, 0.0), [0, 0, 0, 1])
    assert pure_death(3, 1.0, 50.0)[0] == pytest.approx(1.0, abs=1e-14)
    t = math.log(2) / 2
    assert np.allclose(pure_death(2, 1.0, t), [0.25, 0.5, 0.25], atol=1e-15)
    with pytest.raises(RegimeError):
        pure_death(5, 1.0, 1.0, n_max=3)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 40), k=st.floats(0.01, 5), t=st.floats(0, 10))
def test_pure_death_normalised(n, k, t):
    pr = PureDeathDistribution(n, k).at(t)
    assert abs(pr.sum() - 1) < 1e-14 and np.all(pr >= 0)


def test_displaced_vacuum_population():
    p = LaserParams(0.8, 1.0, 0.3, 1.0, omega=0.4)
    sp = SpaceSpec(20)
    a0 = 0.3 + 0.2j
    v = a0 / (p.kappa + 1j * p.omega)
    field0 = np.zeros((sp.n_levels, sp.n_levels), complex)
    field0[1, 1] = 0.6
    field0[2, 2] = 0.4
    field0[1, 2] = field0[2, 1] = 0.2
    rho0 = DensityMatrix.product(field0, np.diag([0.5, 0.5]), sp)
    ev = evolve(rho0, ConstantDriveGenerator(p, sp, a0, 0), 2.0, dt=2e-3, sample_every=0.5)
    W = weyl_field(v, sp.n_max)
    for t, st_ in zip(ev.times, ev.states):
        m = st_.entries
        field = m[0::2, 0::2] + m[1::2, 1::2]
        got = (W.conj().T @ field @ W)[0, 0].real
        assert abs(got - displaced_vacuum_population(field0, v, p.kappa, t)) < 1e-6


def test_long_time_statistics():
    assert lasing_mean_photon(LASING) == pytest.approx(0.125)
    pn = poisson_limit(LASING, 30)
    assert pn[0] == pytest.approx(math.exp(-0.125)) and pn.sum() == pytest.approx(1, abs=1e-15)
    assert below_threshold_linear_entropy(0.2) == pytest.approx(0.48)
    assert below_threshold_linear_entropy(0.5) == pytest.approx(0.375)
    # two-point spectrum (0.75, 0.25)
    ref = -0.75 * math.log(0.75) - 0.25 * math.log(0.25)
    assert below_threshold_von_neumann(0.5) == pytest.approx(ref, abs=1e-14)
    assert lasing_linear_entropy(2.0, 0.5) == pytest.approx(0.40625, abs=1e-15)


@settings(max_examples=30)
@given(c=st.floats(1.01, 50), d=st.floats(0.01, 0.99))
def test_lasing_entropies_match_atom_spectrum(c, d):
    # eigenvalues of the qubit factor of the limit-cycle state
    k, g = 1.0, math.sqrt(c / d)
    p = LaserParams(k, 1.0, d, g)
    from lasersim.closed_forms import limit_cycle_atom

    lam = np.linalg.eigvalsh(limit_cycle_atom(p, 0.0, 0.0))
    lam = lam[lam > 0]
    assert lasing_von_neumann(c, d) == pytest.approx(float(-(lam * np.log(lam)).sum()), abs=1e-10)
    assert lasing_linear_entropy(c, d) == pytest.approx(1 - float((lam**2).sum()), abs=1e-12)
