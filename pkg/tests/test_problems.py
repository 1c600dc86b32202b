import json

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from indcare import (CareProblem, Dae2Problem, DimensionMismatch,
                     LowRankFactor, MissingCoefficient, NotFullRowRank,
                     SolverOptions, gen_heat_fd, gen_random_care,
                     gen_stokes_dae2, load_problem, save_problem)
from indcare.dae2 import get_projector

from conftest import dense_arrays


# -- containers ---------------------------------------------------------------

def test_care_problem_folds_gamma_once():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 5)) - 4 * np.eye(5)
    b1_raw = rng.standard_normal((5, 2))
    prob = CareProblem(a, None, b1_raw / 4.0, np.ones((5, 1)),
                       np.ones((1, 5)), gamma=4.0, b1_raw=b1_raw)
    np.testing.assert_array_equal(prob.b1_raw, b1_raw)
    np.testing.assert_allclose(prob.b1, b1_raw / 4.0)
    np.testing.assert_array_equal(np.asarray(prob.e), np.eye(5))


def test_care_problem_validation():
    a = np.eye(4)
    with pytest.raises(DimensionMismatch):
        CareProblem(np.ones((4, 3)), None, np.ones((4, 1)), np.ones((4, 1)),
                    np.ones((1, 4)))
    with pytest.raises(DimensionMismatch):
        CareProblem(a, None, np.ones((3, 1)), np.ones((4, 1)),
                    np.ones((1, 4)))
    with pytest.raises(DimensionMismatch):
        CareProblem(a, None, np.ones((4, 1)), np.ones((4, 1)),
                    np.ones((1, 3)))
    with pytest.raises(ValueError):
        CareProblem(a, None, np.ones((4, 1)), np.ones((4, 1)),
                    np.ones((1, 4)), gamma=0.0)


def test_with_b1_rescales_by_gamma():
    prob = gen_random_care(6, 1, 1, 1, seed=3, gamma=5.0)
    new_raw = np.zeros((6, 2))
    other = prob.with_b1(new_raw)
    assert other.b1.shape == (6, 2)
    np.testing.assert_array_equal(other.b1, new_raw)
    assert other.gamma == 5.0


def test_dae2_requires_wide_full_rank_j():
    n = 5
    a = sp.identity(n, format="csr") * -1.0
    e = sp.identity(n, format="csr")
    with pytest.raises(NotFullRowRank):
        Dae2Problem(a, sp.csr_matrix(np.eye(n)), e, np.ones((n, 1)),
                    np.ones((n, 1)), np.ones((1, n)))
    with pytest.raises(DimensionMismatch):
        Dae2Problem(a, sp.csr_matrix(np.ones((2, n + 1))), e,
                    np.ones((n, 1)), np.ones((n, 1)), np.ones((1, n)))


def test_low_rank_factor_gram_norm():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((20, 3))
    f = LowRankFactor(z)
    assert f.n == 20 and f.rank == 3 and not f.is_empty
    dense = np.linalg.norm(z @ z.T, 2)
    assert abs(f.gram_norm() - dense) <= 1e-12 * dense
    assert LowRankFactor.empty(7).gram_norm() == 0.0


def test_solver_options_validation():
    SolverOptions()
    for kw in ({"tau": 0.0}, {"max_outer": 0}, {"compression_tol": 0.0},
               {"compression_tol": 1.5}, {"inner": "qz"},
               {"strategy": "magic"}, {"bernoulli": "maybe"},
               {"cache_size": 0}):
        with pytest.raises(ValueError):
            SolverOptions(**kw)


# -- manifest I/O -------------------------------------------------------------

def test_save_load_roundtrip_bit_comparable(tmp_path):
    prob = gen_random_care(12, 2, 2, 3, seed=9, gamma=2.0)
    dir1 = tmp_path / "first"
    dir2 = tmp_path / "second"
    man1 = save_problem(prob, str(dir1), "p")
    loaded = load_problem(man1)
    assert loaded.gamma == 2.0
    np.testing.assert_allclose(loaded.b1, prob.b1, rtol=1e-15)
    man2 = save_problem(loaded, str(dir2), "p")
    for key in ("a", "e", "b1", "b2", "c"):
        f1 = (dir1 / f"p_{key}.mtx").read_bytes()
        f2 = (dir2 / f"p_{key}.mtx").read_bytes()
        assert f1 == f2, key
    assert (json.loads((dir1 / "p.json").read_text()) ==
            json.loads((dir2 / "p.json").read_text()))
    assert man2.endswith("p.json")


def test_dae2_save_load_roundtrip(tmp_path):
    prob = gen_stokes_dae2(5, m1=1, m2=1, p=2)
    man = save_problem(prob, str(tmp_path), "st")
    loaded = load_problem(man)
    assert loaded.kind == "dae2"
    assert loaded.n == prob.n and loaded.n_c == prob.n_c
    assert (loaded.j != prob.j).nnz == 0


def test_manifest_missing_b2_names_key(tmp_path):
    prob = gen_random_care(6, 1, 1, 1, seed=0)
    man_path = save_problem(prob, str(tmp_path), "q")
    man = json.loads(open(man_path).read())
    del man["files"]["B2"]
    with open(man_path, "w") as fh:
        json.dump(man, fh)
    with pytest.raises(MissingCoefficient, match="B2"):
        load_problem(man_path)


def test_manifest_without_e_gets_identity(tmp_path):
    prob = gen_random_care(6, 1, 1, 1, seed=0)
    man_path = save_problem(prob, str(tmp_path), "q")
    man = json.loads(open(man_path).read())
    del man["files"]["E"]
    with open(man_path, "w") as fh:
        json.dump(man, fh)
    loaded = load_problem(man_path)
    np.testing.assert_array_equal(np.asarray(loaded.e), np.eye(6))


def test_manifest_unknown_kind_rejected(tmp_path):
    prob = gen_random_care(4, 1, 1, 1, seed=0)
    man_path = save_problem(prob, str(tmp_path), "q")
    man = json.loads(open(man_path).read())
    man["kind"] = "dae42"
    with open(man_path, "w") as fh:
        json.dump(man, fh)
    with pytest.raises(MissingCoefficient):
        load_problem(man_path)


# -- random generator ---------------------------------------------------------

def test_gen_random_care_deterministic():
    p1 = gen_random_care(30, 2, 3, 4, seed=5)
    p2 = gen_random_care(30, 2, 3, 4, seed=5)
    for key in ("a", "e", "b1", "b2", "c"):
        np.testing.assert_array_equal(getattr(p1, key), getattr(p2, key))
    p3 = gen_random_care(30, 2, 3, 4, seed=6)
    assert np.any(p3.a != p1.a)


def test_gen_random_care_stable_margin():
    prob = gen_random_care(40, 2, 2, 2, seed=1, stability_margin=0.05)
    a, e, *_ = dense_arrays(prob)
    ev = sla.eigvals(a, e)
    assert ev.real.max() < -0.049
    assert prob.metadata["known_stable"]


def test_gen_random_care_scalar_no_disturbance():
    prob = gen_random_care(1, 0, 1, 1, seed=0)
    assert prob.b1.shape == (1, 0)
    assert prob.b2.shape == (1, 1)
    a, e, *_ = dense_arrays(prob)
    assert (a[0, 0] / e[0, 0]) < 0


def test_gen_random_care_unstable_count_exact():
    prob = gen_random_care(50, 2, 3, 2, seed=7, n_unstable=4)
    assert prob.metadata["n_unstable"] == 4
    a, e, *_ = dense_arrays(prob)
    ev = sla.eigvals(a, e)
    assert int((ev.real > 0).sum()) == 4
    with pytest.raises(ValueError):
        gen_random_care(5, 1, 1, 1, n_unstable=5)


# -- heat generator -----------------------------------------------------------

def test_heat_small_structure():
    prob = gen_heat_fd(5, 1, 1, 1)
    a = prob.a.toarray()
    assert np.all(a[np.abs(np.subtract.outer(range(5), range(5))) > 1] == 0)
    row_sums = a.sum(axis=1)
    assert np.all(row_sums <= 1e-9 * np.abs(a).max())
    e = prob.e.toarray()
    assert np.all(sla.eigvalsh(e) > 0)


def test_heat_pencil_stable():
    prob = gen_heat_fd(120, 2, 2, 3)
    a, e, *_ = dense_arrays(prob)
    ev = sla.eigvals(a, e)
    assert np.abs(ev.imag).max() <= 1e-8 * np.abs(ev.real).max()
    assert ev.real.max() < 0


def test_heat_large_shapes():
    prob = gen_heat_fd(79841, 3, 3, 6)
    assert prob.n == 79841
    assert prob.b1.shape == (79841, 3)
    assert prob.b2.shape == (79841, 3)
    assert prob.c.shape == (6, 79841)
    assert prob.is_sparse and prob.metadata["known_stable"]


def test_heat_rejects_tiny_n():
    with pytest.raises(ValueError):
        gen_heat_fd(2, 1, 1, 1)


# -- stokes generator ---------------------------------------------------------

def test_stokes_shapes_and_projector():
    prob = gen_stokes_dae2(15, m1=1, m2=1, p=6)
    assert prob.n == 420
    assert prob.j.shape == (224, 420)
    assert prob.b1.shape == (420, 1)
    assert prob.c.shape == (6, 420)
    get_projector(prob)


def test_stokes_deterministic():
    p1 = gen_stokes_dae2(6, m1=2, m2=2, p=3, seed=4)
    p2 = gen_stokes_dae2(6, m1=2, m2=2, p=3, seed=4)
    assert (p1.a != p2.a).nnz == 0
    np.testing.assert_array_equal(p1.b1, p2.b1)
    np.testing.assert_array_equal(p1.b2, p2.b2)
    np.testing.assert_array_equal(p1.c, p2.c)


def test_stokes_stable_without_injection():
    prob = gen_stokes_dae2(5, m1=1, m2=1, p=2)
    assert prob.metadata["known_stable"]
    n, n_c = prob.n, prob.n_c
    sad_a = np.block([[prob.a.toarray(), prob.j.T.toarray()],
                      [prob.j.toarray(), np.zeros((n_c, n_c))]])
    sad_e = np.zeros_like(sad_a)
    sad_e[:n, :n] = prob.e.toarray()
    ev = sla.eigvals(sad_a, sad_e)
    ev = ev[np.isfinite(ev)]
    assert ev.real.max() < 0


def test_stokes_unstable_count_verified():
    prob = gen_stokes_dae2(10, m1=1, m2=1, p=4, n_unstable=2, seed=5)
    assert prob.metadata["n_unstable"] == 2
    n, n_c = prob.n, prob.n_c
    sad_a = np.block([[prob.a.toarray(), prob.j.T.toarray()],
                      [prob.j.toarray(), np.zeros((n_c, n_c))]])
    sad_e = np.zeros_like(sad_a)
    sad_e[:n, :n] = prob.e.toarray()
    ev = sla.eigvals(sad_a, sad_e)
    ev = ev[np.isfinite(ev)]
    assert int((ev.real > 0).sum()) == 2


def test_stokes_rejects_tiny_grid():
    with pytest.raises(ValueError):
        gen_stokes_dae2(2)
