import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drdam.distributed import (HEADER_SIZE, ClipConfig, DistributedMemory, add_memory_distributed,
                               dense_jacobian, energy_approx, energy_grad_approx, from_bytes,
                               grad_comp, grad_dense_reference, grad_l2_specialized,
                               load_distributed, proc_mems, save_distributed, to_bytes,
                               workspace_peak)
from drdam.errors import FormatError, PreconditionError, ShapeError
from drdam.exact import EnergySpec, Normalization, energy_exact, grad_exact
from drdam.features import FeatureMap, FeatureMapSpec, Kind

from conftest import cube

CLIP = ClipConfig()


def test_consolidation_is_sum_of_features(rng):
    spec = FeatureMapSpec("sincos", 16, 4, 2.0, seed=1)
    X = cube(rng, 5, 4)
    dm = proc_mems(spec, X, with_R=True)
    fm = FeatureMap(spec)
    Phi = fm.transform(X)
    np.testing.assert_allclose(dm.T, Phi.sum(axis=0), rtol=1e-13)
    np.testing.assert_allclose(dm.R, Phi.T @ X, rtol=1e-12)
    assert dm.K == 5


def test_incremental_insert_matches_batch(rng):
    spec = FeatureMapSpec("cos", 32, 3, 1.0, seed=2)
    X = cube(rng, 4, 3)
    dm = proc_mems(spec, X[:1], with_R=True)
    for x in X[1:]:
        new = add_memory_distributed(dm, x)
        assert new.K == dm.K + 1 and new is not dm
        dm = new
    ref = proc_mems(spec, X, with_R=True)
    np.testing.assert_allclose(dm.T, ref.T, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(dm.R, ref.R, rtol=1e-12, atol=1e-15)


def test_empty_memory_energy_is_precondition_error():
    dm = proc_mems(FeatureMapSpec("cos", 4, 2, 1.0), np.empty((0, 2)))
    assert dm.K == 0 and np.all(dm.T == 0)
    with pytest.raises(PreconditionError):
        energy_approx(dm, CLIP, np.zeros(2))


@pytest.mark.parametrize("kind", list(Kind))
def test_streaming_gradient_matches_dense_jacobian(kind, rng):
    spec = FeatureMapSpec(kind, 32, 8, 2.0, seed=13)
    dm = proc_mems(spec, cube(rng, 6, 8))
    for x in cube(rng, 5, 8):
        np.testing.assert_allclose(grad_comp(dm, CLIP, x), grad_dense_reference(dm, CLIP, x),
                                   rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("kind", list(Kind))
def test_gradient_matches_finite_differences(kind, rng):
    spec = FeatureMapSpec(kind, 64, 5, 3.0, seed=4)
    dm = proc_mems(spec, cube(rng, 5, 5))
    x = cube(rng, 1, 5)[0]
    f = lambda y: energy_approx(dm, CLIP, y)
    h = 1e-6
    fd = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(5)])
    np.testing.assert_allclose(grad_comp(dm, CLIP, x), fd, rtol=1e-6, atol=1e-9)


def test_dense_jacobian_matches_finite_differences(rng):
    spec = FeatureMapSpec("expexp", 8, 3, 2.0, seed=8)
    fm = FeatureMap(spec)
    y = cube(rng, 1, 3)[0]
    h = 1e-6
    fd = np.stack([(fm.transform(y + h * e) - fm.transform(y - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
    np.testing.assert_allclose(dense_jacobian(spec, y), fd, rtol=1e-6, atol=1e-9)


def test_normalized_gradient(rng):
    spec = FeatureMapSpec("sincos", 64, 4, 2.0, seed=8)
    dm = proc_mems(spec, cube(rng, 3, 4) + 0.1)
    x = cube(rng, 1, 4)[0] + 0.1
    norm = Normalization.L2_NORMALIZE
    f = lambda y: energy_approx(dm, CLIP, y, norm)
    h = 1e-6
    fd = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(4)])
    np.testing.assert_allclose(grad_comp(dm, CLIP, x, norm), fd, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(grad_comp(dm, CLIP, x, norm), grad_dense_reference(dm, CLIP, x, norm),
                               rtol=1e-10, atol=1e-13)


def test_approximation_converges_to_exact(rng):
    X = cube(rng, 5, 4)
    x = cube(rng, 1, 4)[0]
    es = EnergySpec(beta=2.0)
    errs = []
    for Y in (64, 4096):
        dm = proc_mems(FeatureMapSpec("sincos", Y, 4, 2.0, seed=3), X)
        errs.append(np.mean([abs(energy_approx(proc_mems(FeatureMapSpec("sincos", Y, 4, 2.0, seed=s), X),
                                               CLIP, x) - energy_exact(es, X, x)) for s in range(10)]))
    assert errs[1] < errs[0] / 3


def test_specialized_gradient_single_memory_is_exact(rng):
    xi = cube(rng, 1, 6)[0]
    dm = proc_mems(FeatureMapSpec("sincos", 16, 6, 5.0, seed=1), [xi], with_R=True)
    x = cube(rng, 1, 6)[0]
    np.testing.assert_allclose(grad_l2_specialized(dm, x), x - xi, atol=1e-13)


def test_specialized_gradient_approximates_exact(rng):
    X = cube(rng, 6, 8)
    dm = proc_mems(FeatureMapSpec("sincos", 8192, 8, 2.0, seed=5), X, with_R=True)
    x = cube(rng, 1, 8)[0]
    g = grad_exact(EnergySpec(beta=2.0), X, x)
    assert np.linalg.norm(grad_l2_specialized(dm, x) - g) < 0.02 * np.linalg.norm(g) + 1e-3


def test_clip_gives_zero_gradient():
    # far from a single memory at large beta the estimate falls below the clip
    spec = FeatureMapSpec("sincos", 4, 2, 400.0, seed=0)
    dm = proc_mems(spec, [[0.0, 0.0]], with_R=True)
    x = np.array([1.0, 1.0])
    s = FeatureMap(spec).transform(x) @ dm.T
    clip = ClipConfig(epsilon_log=max(s, 0) + 1.0)
    E, g = energy_grad_approx(dm, clip, x)
    assert np.all(g == 0) and np.isclose(E, -np.log(clip.epsilon_log) / 400.0)
    assert np.all(grad_l2_specialized(dm, x, clip.epsilon_log) == 0)


def test_batch_equals_single(rng):
    spec = FeatureMapSpec("exp", 40, 5, 1.5, seed=9)
    dm = proc_mems(spec, cube(rng, 4, 5), with_R=True)
    X = cube(rng, 3, 5)
    E, G = energy_grad_approx(dm, CLIP, X)
    for i in range(3):
        e, g = energy_grad_approx(dm, CLIP, X[i])
        assert np.isclose(E[i], e, rtol=1e-12)
        np.testing.assert_allclose(G[i], g, rtol=1e-10, atol=1e-14)


def test_streaming_workspace_is_constant_in_K_and_linear_in_Y(rng):
    D = 32
    x = cube(rng, 1, D)[0]
    peaks = {}
    for Y, K in ((1024, 4), (1024, 64), (4096, 4)):
        dm = proc_mems(FeatureMapSpec("sincos", Y, D, 1.0, seed=1), cube(rng, K, D))
        _, peaks[(Y, K)] = workspace_peak(grad_comp, dm, CLIP, x)
    assert peaks[(1024, 64)] <= peaks[(1024, 4)] * 1.1 + 64
    # no Y x D matrix is ever formed
    assert peaks[(4096, 4)] < 4096 * D / 4
    _, insert_peak = workspace_peak(add_memory_distributed, dm, x)
    assert insert_peak < 3 * dm.T.size + 8 * D + 4096


# -- serialization -------------------------------------------------------------

def _dm(rng, with_R=False, orthogonal=False):
    spec = FeatureMapSpec("expexp", 8, 3, 2.5, seed=2 ** 63 + 5, orthogonal=orthogonal)
    return proc_mems(spec, cube(rng, 4, 3), with_R=with_R)


@pytest.mark.parametrize("with_R", [False, True])
def test_round_trip(rng, tmp_path, with_R):
    dm = _dm(rng, with_R, orthogonal=True)
    p = tmp_path / "m.drdam"
    save_distributed(dm, p)
    back = load_distributed(p)
    assert back.spec == dm.spec and back.K == dm.K
    assert back.T.tobytes() == dm.T.tobytes()
    if with_R:
        assert back.R.tobytes() == dm.R.tobytes()
    buf = io.BytesIO()
    save_distributed(dm, buf)
    assert buf.getvalue() == p.read_bytes()


def test_size_independent_of_K(rng):
    spec = FeatureMapSpec("sincos", 16, 4, 1.0)
    a = to_bytes(proc_mems(spec, cube(rng, 1, 4)))
    b = to_bytes(proc_mems(spec, cube(rng, 300, 4)))
    assert len(a) == len(b) == HEADER_SIZE + 8 * 32


@pytest.mark.parametrize("offset,value,expect", [
    (0, b"X", 0),          # magic
    (6, b"\x00" * 8, 6),   # D = 0
    (14, b"\x00" * 8, 14),  # Y = 0
    (22, b"\x09", 22),     # kind tag
    (23, b"\x00" * 8, 23),  # beta = 0
    (39, b"\x02", 39),     # orthogonal flag
    (48, b"\x07", 48),     # with_R flag
])
def test_malformed_headers_report_offset(rng, offset, value, expect):
    data = bytearray(to_bytes(_dm(rng)))
    data[offset:offset + len(value)] = value
    with pytest.raises(FormatError) as ei:
        from_bytes(bytes(data))
    assert ei.value.offset == expect


def test_truncated_payload(rng):
    data = to_bytes(_dm(rng))
    with pytest.raises(FormatError) as ei:
        from_bytes(data[:-3])
    assert ei.value.offset == len(data) - 3
    with pytest.raises(FormatError):
        from_bytes(data[:20])


def test_shape_checks():
    spec = FeatureMapSpec("cos", 4, 2, 1.0)
    with pytest.raises(ShapeError):
        DistributedMemory(spec, T=np.zeros(5))
    with pytest.raises(ShapeError):
        proc_mems(spec, np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        add_memory_distributed(proc_mems(spec, np.zeros((1, 2))), np.zeros(3))


@settings(max_examples=20, deadline=None)
@given(kind=st.sampled_from(list(Kind)), Y=st.integers(1, 12), D=st.integers(1, 4),
       K=st.integers(0, 5), with_R=st.booleans(), seed=st.integers(0, 2 ** 64 - 1))
def test_serialization_round_trip_property(kind, Y, D, K, with_R, seed):
    r = np.random.default_rng(seed % 977)
    dm = proc_mems(FeatureMapSpec(kind, Y, D, 1.0 + seed % 7, seed), r.uniform(0, 1, (K, D)), with_R)
    back = from_bytes(to_bytes(dm))
    assert back.spec == dm.spec and back.K == K
    assert back.T.tobytes() == dm.T.tobytes()
    assert (back.R is None) == (not with_R)
