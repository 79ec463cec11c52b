import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lasersim.errors import ConfigError, TruncationError
from lasersim.hilbert import (
    SIGMA_3,
    SIGMA_MINUS,
    SIGMA_PLUS,
    OperatorMatrix,
    SpaceSpec,
    basis_vector,
    coherent_vector,
    exponential_vector,
    make_operators,
    tensor_embed,
    weyl,
    weyl_composition_phase,
    weyl_field,
)

small = st.floats(-0.5, 0.5, allow_nan=False)


def fock(n_levels, n):
    v = np.zeros(n_levels, dtype=complex)
    v[n] = 1
    return v


def test_space_layout():
    sp = SpaceSpec(3)
    assert sp.dim == 8
    assert [sp.index(n, e) for n in range(4) for e in (0, 1)] == list(range(8))
    with pytest.raises(ConfigError):
        SpaceSpec(0)
    with pytest.raises(ConfigError):
        sp.index(4, 0)


def test_ladder_examples():
    sp = SpaceSpec(6)
    ops = make_operators(sp)
    v2 = basis_vector(sp, 2, 0)
    v1 = basis_vector(sp, 1, 0)
    assert np.vdot(v1, ops.a.entries @ v2) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert np.allclose(ops.a.entries @ basis_vector(sp, 0, 1), 0)
    for n in range(sp.n_levels):
        for eta in (0, 1):
            v = basis_vector(sp, n, eta)
            assert np.allclose(ops.adag.entries @ ops.a.entries @ v, n * v, atol=1e-14)
    assert np.allclose(ops.adag.entries @ basis_vector(sp, sp.n_max, 0), 0)


def test_truncated_relations():
    sp = SpaceSpec(8)
    ops = make_operators(sp)
    a, ad, N = ops.a.entries, ops.adag.entries, ops.N.entries
    low = slice(0, sp.dim - 2)
    comm = a @ ad - ad @ a
    assert np.allclose(comm[low, low], np.eye(sp.dim - 2), atol=1e-14)
    assert np.allclose(N, ad @ a, atol=1e-14)
    assert np.allclose((N @ ad - ad @ N)[low, low], ad[low, low], atol=1e-14)
    assert np.allclose((a @ N - N @ a)[low, low], a[low, low], atol=1e-14)
    sp_, sm, s3 = ops.sigma_plus.entries, ops.sigma_minus.entries, ops.sigma_3.entries
    assert np.array_equal(sp_ @ sm + sm @ sp_, np.eye(sp.dim))
    assert np.array_equal(s3 @ s3, np.eye(sp.dim))
    assert np.array_equal(a.conj().T, ad)
    assert np.array_equal(sm.conj().T, sp_)
    assert np.array_equal(N, N.conj().T) and np.array_equal(s3, s3.conj().T)


def test_tensor_embed_examples():
    sp = SpaceSpec(4)
    If = np.eye(sp.n_levels)
    s3 = tensor_embed(If, SIGMA_3, sp)
    v = basis_vector(sp, 0, 0)
    assert np.allclose(s3.entries @ v, v)
    a = np.diag(np.sqrt(np.arange(1, sp.n_levels)), 1)
    A = tensor_embed(a, np.eye(2), sp)
    assert np.allclose(A.entries @ basis_vector(sp, 1, 1), basis_vector(sp, 0, 1))
    S = tensor_embed(If, SIGMA_MINUS, sp)
    assert np.max(np.abs(A.entries @ S.entries - S.entries @ A.entries)) < 1e-14
    with pytest.raises(ConfigError):
        tensor_embed(np.eye(3), np.eye(2), sp)
    with pytest.raises(ConfigError):
        tensor_embed(If, np.eye(3), sp)


def test_coherent_examples():
    sp = SpaceSpec(16)
    e0 = coherent_vector(0, sp)
    assert np.array_equal(e0.amplitudes, fock(17, 0))
    z = 0.5
    E = coherent_vector(z, sp)
    # Poisson tail computed independently by direct summation of the series
    tail = 1 - sum(math.exp(-z**2) * z ** (2 * n) / math.factorial(n) for n in range(17))
    assert E.leakage < 1e-12
    assert abs(E.norm() ** 2 - (1 - E.leakage)) < 1e-15
    assert abs(E.leakage - tail) < 1e-15
    N = np.diag(np.arange(17))
    assert np.vdot(E.amplitudes, N @ E.amplitudes).real == pytest.approx(z**2, abs=1e-12)


def test_coherent_leakage_abort():
    with pytest.raises(TruncationError, match="increase n_max"):
        coherent_vector(1.0, SpaceSpec(2))


def test_exponential_vector_relation():
    sp = SpaceSpec(12)
    z = 0.3 - 0.2j
    e = exponential_vector(z, sp).amplitudes
    E = coherent_vector(z, sp).amplitudes
    assert np.allclose(E, math.exp(-abs(z) ** 2 / 2) * e, atol=1e-15)


def test_weyl_examples():
    sp = SpaceSpec(16)
    assert np.allclose(weyl(0, sp).entries, np.eye(sp.dim), atol=1e-15)
    u = 0.3 + 0.2j
    W = weyl(u, sp).entries
    Wm = weyl(-u, sp).entries
    ops = make_operators(sp)
    low = slice(0, 16)
    shifted = W @ ops.a.entries @ Wm
    assert np.max(np.abs((shifted - (ops.a.entries - u * np.eye(sp.dim)))[low, low])) < 1e-8
    assert np.max(np.abs((W @ Wm - np.eye(sp.dim))[low, low])) < 1e-12
    col = W @ basis_vector(sp, 0, 0)
    ref = np.kron(coherent_vector(u, sp).amplitudes, [1, 0])
    assert np.max(np.abs(col - ref)) < 1e-8


def test_weyl_is_unitary():
    W = weyl_field(0.4j, 16)
    assert np.allclose(W @ W.conj().T, np.eye(17), atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(ur=small, ui=small, vr=small, vi=small)
def test_weyl_composition(ur, ui, vr, vi):
    u, v = complex(ur, ui), complex(vr, vi)
    n = 24
    Wu, Wv, Wuv = weyl_field(u, n), weyl_field(v, n), weyl_field(u + v, n)
    low = slice(0, 12)
    lhs = (Wu @ Wv)[low, low]
    # BCH: exp(X)exp(Y) = exp(X+Y) exp([X,Y]/2), [X,Y] = (u conj(v) - conj(u) v) I
    phase = np.exp((u * np.conj(v) - np.conj(u) * v) / 2)
    assert np.max(np.abs(lhs - phase * Wuv[low, low])) < 1e-8
    assert weyl_composition_phase(u, v) == pytest.approx(phase, abs=1e-15)


def test_operator_json_round_trip():
    sp = SpaceSpec(3)
    ops = make_operators(sp)
    X = OperatorMatrix(ops.a.entries * (0.1 + 1 / 3j) + ops.sigma_3.entries * math.pi, sp, "custom")
    back = OperatorMatrix.from_json(X.to_json())
    assert np.array_equal(back.entries, X.entries)
    assert back.label == "custom" and back.space == sp
    with pytest.raises(ConfigError):
        OperatorMatrix(np.eye(3), sp)


def test_operator_construction_deterministic():
    a = make_operators(SpaceSpec(5))
    b = make_operators(SpaceSpec(5))
    for name in ("a", "adag", "N", "sigma_plus", "sigma_minus", "sigma_3"):
        assert np.array_equal(getattr(a, name).entries, getattr(b, name).entries)
    assert np.array_equal(a.sigma_plus.entries, np.kron(np.eye(6), SIGMA_PLUS))
