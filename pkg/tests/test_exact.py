import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from drdam.errors import DomainError, PreconditionError, ShapeError
from drdam.exact import (EnergySpec, MemoryMatrix, Normalization, Similarity, add_memory_exact,
                         energy_exact, energy_grad_exact, grad_exact, softmax_weights)

from conftest import cube


def naive_energy(spec, Xi, x):
    g = x / np.linalg.norm(x) if spec.normalization is Normalization.L2_NORMALIZE else x
    if spec.similarity is Similarity.L2:
        a = -0.5 * spec.beta * np.sum((Xi - g) ** 2, axis=1)
    else:
        a = spec.beta * Xi @ g
    return -logsumexp(a) / spec.beta


def fd_grad(f, x, h=1e-6):
    return np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(x.size)])


SPECS = [EnergySpec(sim, beta, norm) for sim in Similarity for norm in Normalization for beta in (1.0, 10.0)]


@pytest.mark.parametrize("spec", SPECS, ids=str)
def test_energy_and_gradient_match_oracles(spec, rng):
    Xi = cube(rng, 6, 5)
    x = cube(rng, 1, 5)[0] + 0.05
    assert np.isclose(energy_exact(spec, Xi, x), naive_energy(spec, Xi, x), rtol=1e-12, atol=1e-14)
    g = grad_exact(spec, Xi, x)
    fd = fd_grad(lambda y: naive_energy(spec, Xi, y), x)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_single_memory_l2_is_quadratic(rng):
    xi = cube(rng, 1, 4)[0]
    x = cube(rng, 1, 4)[0]
    spec = EnergySpec(beta=3.0)
    assert np.isclose(energy_exact(spec, [xi], x), 0.5 * np.sum((x - xi) ** 2))
    np.testing.assert_allclose(grad_exact(spec, [xi], x), x - xi)
    np.testing.assert_array_equal(grad_exact(spec, [xi], xi), np.zeros(4))


def test_large_beta_is_stable():
    Xi = np.array([[0.0, 0.0], [1.0, 1.0]])
    spec = EnergySpec(beta=1e4)
    E, g = energy_grad_exact(spec, Xi, np.array([0.9, 1.0]))
    assert np.isfinite(E) and np.all(np.isfinite(g))
    np.testing.assert_allclose(g, [-0.1, 0.0], atol=1e-12)


def test_batch_equals_single(rng):
    spec = EnergySpec(Similarity.DOT, 4.0, Normalization.L2_NORMALIZE)
    Xi = cube(rng, 7, 3)
    X = cube(rng, 5, 3) + 0.01
    E, G = energy_grad_exact(spec, Xi, X)
    for i, x in enumerate(X):
        e, g = energy_grad_exact(spec, Xi, x)
        assert np.isclose(E[i], e, rtol=1e-14)
        np.testing.assert_allclose(G[i], g, rtol=1e-13, atol=1e-16)


def test_softmax_weights_sum_to_one(rng):
    p = softmax_weights(EnergySpec(beta=5.0), cube(rng, 9, 4), cube(rng, 1, 4)[0])
    assert p.shape == (9,) and np.isclose(p.sum(), 1.0) and np.all(p >= 0)


def test_memory_matrix_is_immutable():
    m = MemoryMatrix(np.eye(3))
    with pytest.raises(ValueError):
        m.rows[0, 0] = 5.0
    m2 = add_memory_exact(m, np.ones(3))
    assert m.K == 3 and m2.K == 4
    np.testing.assert_array_equal(m2.rows[-1], np.ones(3))


def test_errors():
    spec = EnergySpec()
    with pytest.raises(PreconditionError):
        energy_exact(spec, MemoryMatrix.empty(3), np.zeros(3))
    with pytest.raises(ShapeError):
        energy_exact(spec, np.eye(3), np.zeros(4))
    with pytest.raises(ShapeError):
        add_memory_exact(MemoryMatrix(np.eye(3)), np.zeros(2))
    with pytest.raises(DomainError):
        energy_exact(EnergySpec(normalization="l2normalize"), np.eye(3), np.zeros(3))
    with pytest.raises(DomainError):
        MemoryMatrix([[np.inf, 0.0]])
    with pytest.raises(ValueError):
        EnergySpec(beta=-1.0)


@settings(max_examples=30, deadline=None)
@given(K=st.integers(1, 8), D=st.integers(1, 6), beta=st.floats(0.1, 50), seed=st.integers(0, 10 ** 6))
def test_energy_bounds_and_permutation_invariance(K, D, beta, seed):
    r = np.random.default_rng(seed)
    Xi = r.uniform(0, 1, size=(K, D))
    x = r.uniform(0, 1, size=D)
    spec = EnergySpec(beta=beta)
    E = energy_exact(spec, Xi, x)
    d2 = 0.5 * np.sum((Xi - x) ** 2, axis=1)
    # -lse is bounded by the nearest memory and by the nearest minus log K / beta
    assert E <= d2.min() + 1e-12
    assert E >= d2.min() - np.log(K) / beta - 1e-12
    perm = r.permutation(K)
    assert np.isclose(energy_exact(spec, Xi[perm], x), E, rtol=1e-12, atol=1e-14)
