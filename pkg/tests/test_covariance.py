import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucadoa.array_model import array_response, partition_response
from ucadoa.covariance import OpCount, partial_covariances, partial_from_exact, sample_covariance
from ucadoa.errors import InsufficientElements
from ucadoa.signal_sim import NoiseModel, SnapshotMatrix, exact_covariance, synthesize_snapshots


def test_rank_one_single_snapshot(geom, rng):
    v = rng.standard_normal(14) + 1j * rng.standard_normal(14)
    r = sample_covariance(SnapshotMatrix(v[:, None], geom))
    np.testing.assert_allclose(r, np.outer(v, v.conj()), atol=1e-13)
    assert np.linalg.matrix_rank(r) == 1


def test_zero_snapshots(geom):
    r = sample_covariance(SnapshotMatrix(np.zeros((14, 5)), geom))
    assert not r.any()


def test_exactly_hermitian(geom, sources):
    x = synthesize_snapshots(geom, sources, NoiseModel(), 37, 5.0, seed=1)
    r = sample_covariance(x)
    assert np.array_equal(r, r.conj().T)


def test_noise_free_convergence(geom, sources, exact_noiseless):
    x = synthesize_snapshots(geom, sources, NoiseModel(), 100_000, seed=2, noise_variance=0.0)
    r = sample_covariance(x)
    assert np.linalg.norm(r - exact_noiseless) / np.linalg.norm(exact_noiseless) < 0.01


def test_partial_blocks_converge(geom, sources, response):
    x = synthesize_snapshots(geom, sources, NoiseModel(), 100_000, 10.0, seed=3)
    pc = partial_covariances(x, 3)
    a1, a2, a3 = partition_response(response, 3)
    for est, exact in [(pc.r12, a1 @ a2.conj().T), (pc.r31, a3 @ a1.conj().T), (pc.r32, a3 @ a2.conj().T)]:
        assert np.linalg.norm(est - exact) / np.linalg.norm(exact) < 0.03


def test_op_count_reference_scenario(geom, sources):
    x = synthesize_snapshots(geom, sources, NoiseModel(), 100, 10.0, seed=4)
    ops = OpCount()
    pc = partial_covariances(x, 3, ops)
    assert ops.stage("covariance") == 100 * (9 + 24 + 24) == 5700
    assert ops.stage("covariance") < 14 * 14 * 100
    assert pc.r31.shape == (8, 3) and pc.r32.shape == (8, 3)
    assert np.array_equal(pc.r21, pc.r12.conj().T)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 6), st.integers(1, 30))
def test_op_count_law(p, extra, k):
    from ucadoa.array_model import UcaGeometry
    n = 2 * p + 2 + extra
    g = UcaGeometry(n, 0.5, 1.0)
    x = SnapshotMatrix(np.ones((n, k)), g)
    ops = OpCount()
    partial_covariances(x, p, ops)
    assert ops.complex_multiplies == k * p * (2 * n - 3 * p)


def test_insufficient_elements(geom):
    x = SnapshotMatrix(np.ones((14, 3)), geom)
    with pytest.raises(InsufficientElements):
        partial_covariances(x, 7)
    with pytest.raises(InsufficientElements):
        partial_from_exact(np.eye(14), 7)


def test_partial_from_identity():
    pc = partial_from_exact(np.eye(4), 1)
    assert pc.r12.shape == (1, 1) and pc.r12[0, 0] == 0
    assert not pc.r31.any() and not pc.r32.any()
    assert pc.r31.shape == (2, 1)


def test_partial_from_exact_blocks(exact_noiseless, response):
    pc = partial_from_exact(exact_noiseless, 3)
    a1, a2, a3 = partition_response(response, 3)
    np.testing.assert_allclose(pc.r12, a1 @ a2.conj().T, atol=1e-12)
    np.testing.assert_allclose(pc.r31, a3 @ a1.conj().T, atol=1e-12)
    np.testing.assert_allclose(pc.r32, a3 @ a2.conj().T, atol=1e-12)


@pytest.mark.parametrize("var", [0.1, 1.0, 7.5])
def test_white_noise_invariance(geom, sources, exact_noiseless, var):
    clean = partial_from_exact(exact_noiseless, 3)
    noisy = partial_from_exact(exact_covariance(geom, sources, NoiseModel(), noise_variance=var), 3)
    for name in ("r12", "r21", "r31", "r32"):
        assert np.max(np.abs(getattr(noisy, name) - getattr(clean, name))) <= 1e-14


def test_block_consistency(geom, sources):
    x = synthesize_snapshots(geom, sources, NoiseModel("toeplitz"), 250, 3.0, seed=9)
    a = partial_covariances(x, 3)
    b = partial_from_exact(sample_covariance(x), 3)
    for name in ("r12", "r31", "r32"):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name), rtol=0, atol=1e-12)


def test_opcount_merge():
    a, b = OpCount(), OpCount()
    a.record("covariance", 10, 9)
    b.record("covariance", 5)
    b.record("evd", 7)
    m = a.merge(b)
    assert m.stages == {"covariance": 15, "evd": 7} and m.complex_multiplies == 22
    assert a.stages == {"covariance": 10}
    with pytest.raises(ValueError):
        a.record("x", -1)
