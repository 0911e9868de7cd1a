import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_gmm.asymptotics import (C_dyn, C_it, C_it_nested, C_of_overlap, RescaledOverlap, T_k, T_k_integral,
                                    T_k_prime, T_k_quadrature, coefficient_table, rescaled_se_fixed_point,
                                    threshold_scaling, write_coefficient_table)


@settings(max_examples=40, deadline=None)
@given(k=st.integers(2, 40), z=st.floats(0.01, 20.0))
def test_T_k_closed_form_matches_quadrature(k, z):
    assert T_k(z, k) == pytest.approx(T_k_quadrature(z, k), abs=1e-8)


def test_T_k_shape():
    for k in (2, 8, 32):
        zs = np.geomspace(1e-3, 1e3, 60)
        T = T_k(zs, k)
        assert T_k(0.0, k) == 0.0 and np.all(np.diff(T) >= 0) and T[-1] > 0.99
        h = 1e-6
        assert T_k_prime(0.3, k) == pytest.approx((T_k(0.3 + h, k) - T_k(0.3 - h, k)) / (2 * h), rel=1e-5)
        from scipy.integrate import quad
        assert T_k_integral(0.7, k) == pytest.approx(quad(lambda u: T_k(u, k), 0, 0.7)[0], abs=1e-10)


def test_step_location_for_large_k():
    # the transition of T_k sits at 2 / (k + 1)
    k = 400
    assert T_k(0.8 * 2 / (k + 1), k) < 0.01 and T_k(1.25 * 2 / (k + 1), k) > 0.99


@pytest.mark.parametrize("k", [2, 5, 16])
def test_coefficients_are_consistent(k):
    cd, y = C_dyn(k, return_y=True)
    ci = C_it(k)
    assert cd < ci
    assert ci == pytest.approx(C_it_nested(k), rel=1e-8)
    # below C_dyn there is no non-trivial rescaled fixed point, above there is
    assert not rescaled_se_fixed_point(0.98 * cd, k).nontrivial
    fp = rescaled_se_fixed_point(1.02 * cd, k)
    assert fp.nontrivial and fp.m_u_tilde == pytest.approx(fp.C * T_k(fp.C * fp.m_u_tilde, k), rel=1e-10)
    x = y / cd
    assert C_of_overlap(x, k) == pytest.approx(cd, rel=1e-9)


def test_rescaling_roundtrip():
    r = RescaledOverlap(0.4, 0.7, 1.2, True)
    back = RescaledOverlap.from_model(*r.to_model(3, 2.0, 0.01), 3, 2.0, 0.01)
    assert (back.m_u_tilde, back.m_v_tilde, back.C) == pytest.approx((0.4, 0.7, 1.2))


def test_threshold_scaling_and_table(tmp_path):
    ts = threshold_scaling(4, 1e-3, 1.0)
    assert ts.lambda_it_coefficient < ts.lambda_alg
    with pytest.raises(ValueError):
        threshold_scaling(4, 1.0, 1.0)
    rows = coefficient_table([2, 3])
    write_coefficient_table(tmp_path / "c.csv", rows)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "k,C_dyn,C_it,C_dyn_asymptotic,C_it_asymptotic" and len(lines) == 3
