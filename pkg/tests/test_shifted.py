import numpy as np
import pytest
import scipy.sparse as sp

from indcare import (SingularShift, SparsePlusLowRank, augmented_solve,
                     shifted_solve, smw_solve)


def _random_op(n, width, seed, sparse=True):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    a -= (np.abs(a).sum(axis=1).max() + 1.0) * np.eye(n)
    e = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    if sparse:
        a = sp.csr_matrix(a)
        e = sp.csr_matrix(e)
    u = rng.standard_normal((n, width))
    v = rng.standard_normal((n, width))
    return SparsePlusLowRank(a, e, u, v), rng


def _dense_phi_k(op, sigma):
    a = op.dense_ak()
    e = op.e.toarray() if sp.issparse(op.e) else np.asarray(op.e, float)
    return sigma * e.T - a.T


def test_width_zero_reduces_to_phi_solve():
    op, rng = _random_op(12, 0, 0)
    f = rng.standard_normal((12, 2))
    x = smw_solve(op, 2.0, f)
    ref = op.phi_factor(2.0).solve(f)
    np.testing.assert_array_equal(x, ref)
    np.testing.assert_allclose(augmented_solve(op, 2.0, f), ref, atol=1e-12)


def test_small_dense_oracle_sigma_two():
    op, rng = _random_op(6, 2, 1, sparse=False)
    f = rng.standard_normal((6, 3))
    ref = np.linalg.solve(_dense_phi_k(op, 2.0), f)
    for strategy in ("smw", "augmented"):
        x = shifted_solve(op, 2.0, f, strategy)
        rel = np.linalg.norm(x - ref) / np.linalg.norm(ref)
        assert rel <= 1e-10, strategy


def test_complex_shift_matches_dense():
    op, rng = _random_op(10, 2, 2)
    sigma = complex(1.5, 2.5)
    f = rng.standard_normal((10, 2))
    ref = np.linalg.solve(_dense_phi_k(op, sigma), f)
    for strategy in ("smw", "augmented"):
        x = shifted_solve(op, sigma, f, strategy)
        assert np.linalg.norm(x - ref) <= 1e-9 * np.linalg.norm(ref)


def test_sigma_at_pencil_eigenvalue_raises():
    op = SparsePlusLowRank(np.diag([-1.0, -2.0]), np.eye(2))
    with pytest.raises(SingularShift):
        op.phi_factor(-1.0)


def test_strategies_agree_randomized():
    for seed in range(8):
        n = 20 + 13 * seed
        op, rng = _random_op(n, seed % 4, seed)
        sigma = complex(0.5 + seed, 0.0 if seed % 2 else 1.0 + seed)
        f = rng.standard_normal((n, 2))
        xs = smw_solve(op, sigma, f)
        xa = augmented_solve(op, sigma, f)
        assert np.linalg.norm(xs - xa) <= 1e-9 * np.linalg.norm(xa)


def test_empty_rhs_passthrough():
    op, _ = _random_op(9, 1, 3)
    out = smw_solve(op, 1.0, np.zeros((9, 0)))
    assert out.shape == (9, 0)


def test_vector_rhs_squeezed():
    op, rng = _random_op(9, 2, 4)
    f = rng.standard_normal(9)
    x = augmented_solve(op, 3.0, f)
    assert x.shape == (9,)
    np.testing.assert_allclose(op.shifted_t_matvec(3.0, x), f, atol=1e-9)


def test_unknown_strategy_rejected():
    op, rng = _random_op(5, 0, 5)
    with pytest.raises(ValueError):
        shifted_solve(op, 1.0, rng.standard_normal((5, 1)), "qr")


def test_backward_error_recorded_per_solve():
    op, rng = _random_op(15, 2, 6)
    f = rng.standard_normal((15, 2))
    smw_solve(op, 2.0, f)
    augmented_solve(op, 2.0, f)
    assert len(op.reports) == 2
    for rep in op.reports:
        assert rep.sigma == complex(2.0)
        assert rep.rhs_width == 2
        assert rep.backward_error <= 1e-12
    as_json = op.reports[0].to_json()
    assert as_json["strategy"] == "smw"


def test_phi_cache_hits_on_exact_shift_only():
    op, rng = _random_op(10, 0, 7)
    f = rng.standard_normal((10, 1))
    smw_solve(op, 2.0, f)
    assert op._phi_cache.misses == 1
    smw_solve(op, 2.0, f)
    assert op._phi_cache.hits == 1
    smw_solve(op, 2.0 + 1e-13, f)
    assert op._phi_cache.misses == 2


def test_extended_shares_phi_cache():
    op, rng = _random_op(10, 0, 8)
    f = rng.standard_normal((10, 1))
    smw_solve(op, 4.0, f)
    ext = op.extended(rng.standard_normal((10, 1)),
                      rng.standard_normal((10, 1)))
    assert ext.width == 1
    smw_solve(ext, 4.0, f)
    assert op._phi_cache.hits >= 1


def test_cache_evicts_beyond_capacity():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((8, 8)) - 6.0 * np.eye(8)
    op = SparsePlusLowRank(a, np.eye(8), cache_size=2)
    f = rng.standard_normal((8, 1))
    for sigma in (1.0, 2.0, 3.0):
        smw_solve(op, sigma, f)
    assert len(op._phi_cache) == 2


def test_matvec_consistency():
    op, rng = _random_op(11, 3, 10, sparse=False)
    x = rng.standard_normal((11, 2))
    ak = op.dense_ak()
    np.testing.assert_allclose(op.matvec(x), ak @ x, atol=1e-12)
    np.testing.assert_allclose(op.t_matvec(x), ak.T @ x, atol=1e-12)
    e = np.asarray(op.e, float)
    np.testing.assert_allclose(op.shifted_t_matvec(2.5, x),
                               2.5 * e.T @ x - ak.T @ x, atol=1e-12)
