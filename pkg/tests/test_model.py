import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_gmm.model import (ModelParams, ProblemInstance, codebook, generate_instance, labels_to_codebook,
                              overlap_of, symmetrized_mse, trace_form_mse)


def test_codebook_rows_are_centred_one_hots():
    for k in (2, 3, 7):
        cb = codebook(k)
        assert cb.shape == (k, k)
        np.testing.assert_allclose(cb.sum(axis=1), 0.0, atol=1e-15)
        np.testing.assert_allclose(cb @ cb.T, np.eye(k) - 1.0 / k, atol=1e-15)


def test_params_derive_integers():
    p = ModelParams(k=3, alpha=2.0, rho=0.1, lam=1.0, d=500)
    assert (p.n, p.s) == (1000, 50)
    assert p.rho == 0.1 and p.alpha == 2.0
    tiny = ModelParams(k=2, alpha=1.0, rho=1e-4, lam=1.0, d=100)
    assert tiny.s == 1 and tiny.s_clamped


@pytest.mark.parametrize("bad", [dict(k=1), dict(rho=0.0), dict(rho=1.5), dict(alpha=0.0), dict(lam=-1.0),
                                 dict(d=0)])
def test_params_reject_invalid(bad):
    kw = dict(k=2, alpha=1.0, rho=0.5, lam=1.0, d=10)
    kw.update(bad)
    with pytest.raises(ValueError):
        ModelParams(**kw)


def test_instance_shapes_and_determinism():
    p = ModelParams(k=3, alpha=1.5, rho=0.2, lam=2.0, d=40, seed=11)
    a, b = generate_instance(p), generate_instance(p)
    assert a.X.shape == (40, 60) and a.U_star.shape == (60, 3) and a.V_star.shape == (40, 3)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.U_star, labels_to_codebook(a.labels, 3))
    zero_rows = np.all(a.V_star == 0, axis=1)
    assert 0 < zero_rows.sum() < 40


def test_instance_signal_scale():
    # E ||X||_F^2 = n d + (lam / s) ||V U^T||_F^2
    p = ModelParams(k=2, alpha=1.0, rho=0.5, lam=4.0, d=400, seed=0)
    inst = generate_instance(p)
    signal = np.sqrt(p.lam / p.s) * inst.V_star @ inst.U_star.T
    noise = inst.X - signal
    assert abs(noise.var() - 1.0) < 0.01


def test_save_load_roundtrip(tmp_path):
    p = ModelParams(k=2, alpha=2.0, rho=0.3, lam=1.5, d=20, seed=5)
    inst = generate_instance(p)
    inst.save(tmp_path / "inst")
    back = ProblemInstance.load(tmp_path / "inst")
    assert back.params == p
    np.testing.assert_array_equal(back.X, inst.X)
    np.testing.assert_array_equal(back.labels, inst.labels)


def test_mse_of_truth_and_of_zero():
    p = ModelParams(k=4, alpha=1.0, rho=0.5, lam=1.0, d=200, seed=1)
    U = generate_instance(p).U_star
    assert symmetrized_mse(U, U) == pytest.approx(0.0, abs=1e-14)
    assert trace_form_mse(U, U) == pytest.approx(0.0, abs=0.02)
    assert trace_form_mse(np.zeros_like(U), U) == pytest.approx(0.75)


@settings(max_examples=40, deadline=None)
@given(k=st.integers(2, 5), seed=st.integers(0, 10_000), perm_seed=st.integers(0, 10_000))
def test_symmetrized_mse_is_permutation_invariant(k, seed, perm_seed):
    rng = np.random.default_rng(seed)
    U = codebook(k)[rng.integers(0, k, 50)]
    U_hat = U + 0.3 * rng.standard_normal(U.shape)
    perm = np.random.default_rng(perm_seed).permutation(k)
    assert symmetrized_mse(U_hat[:, perm], U) == pytest.approx(symmetrized_mse(U_hat, U), abs=1e-12)
    assert trace_form_mse(U_hat[:, perm], U) == pytest.approx(trace_form_mse(U_hat, U), abs=1e-12)


def test_symmetrized_mse_matches_brute_force():
    rng = np.random.default_rng(3)
    k = 3
    U = codebook(k)[rng.integers(0, k, 30)]
    U_hat = rng.standard_normal(U.shape)
    brute = min(np.sum((U_hat[:, list(p)] - U) ** 2) / 30 for p in itertools.permutations(range(k)))
    assert symmetrized_mse(U_hat, U) == pytest.approx(brute, rel=1e-12)


def test_large_k_uses_assignment_solver():
    rng = np.random.default_rng(0)
    k = 10
    U = codebook(k)[rng.integers(0, k, 300)]
    perm = rng.permutation(k)
    assert symmetrized_mse(U[:, perm], U) == pytest.approx(0.0, abs=1e-14)


def test_overlap_normalization():
    U = codebook(2)[[0, 1, 0, 1]]
    np.testing.assert_allclose(overlap_of(U, U), U.T @ U / 4)
    with pytest.raises(ValueError):
        overlap_of(U, U[:3])
