import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_gmm import integrals as I
from sparse_gmm.state_evolution import (QuadratureSpec, composed_map, curvature_at_origin, departs_from_trivial,
                                        f_u, f_v, f_v_prime, informed_start, k_tricritical, psi_u, psi_v,
                                        rank1_se_step, scalars_of, se_fixed_point, se_linearization,
                                        se_step_matrix, se_step_scalar, slope_at_origin, symmetric_overlaps,
                                        uninformed_start)


@pytest.mark.parametrize("z", [0.0, 0.05, 0.7, 3.0, 25.0])
def test_label_engines_agree(z):
    assert I.f_u_gumbel(z, 2) == pytest.approx(I.f_u_tanh(z), abs=1e-12)
    # the tensor rule needs more nodes as the field spread sqrt(z) grows
    assert I.f_u_gumbel(z, 3) == pytest.approx(I.f_u_tensor(z, 3, 60 if z < 5 else 160), abs=1e-9)
    val, se = I.f_u_monte_carlo(z, 5, 1 << 15, 0)
    assert abs(val - I.f_u_gumbel(z, 5)) < max(5 * se, 1e-6)


@pytest.mark.parametrize("k", [2, 3, 6, 12])
def test_channel_maps_limits_and_monotonicity(k):
    rho = 0.1
    assert f_u(0.0, k) == 0.0 and f_v(0.0, k, rho) == 0.0
    zs = np.geomspace(1e-3, 1e3, 25)
    fu = np.array([f_u(z, k) for z in zs])
    fv = np.array([f_v(z, k, rho) for z in zs])
    # strictly increasing until saturation, then flat up to rounding
    assert np.all(np.diff(fu) > -1e-12) and np.all(np.diff(fv) > -1e-12)
    assert np.all(np.diff(fu[:15]) > 0) and np.all(np.diff(fv[:15]) > 0)
    # f_v approaches rho like rho a / (1 + a), a = z / k
    assert fu[-1] == pytest.approx(1.0, abs=1e-9) and fv[-1] == pytest.approx(rho, rel=5 * k / zs[-1])
    assert np.all(fv <= rho) and np.all(fu <= 1.0 + 1e-12)


def test_negative_precision_rejected():
    with pytest.raises(ValueError):
        f_u(-1.0, 2)
    with pytest.raises(ValueError):
        QuadratureSpec(method="simpson")


@settings(max_examples=25, deadline=None)
@given(k=st.integers(2, 8), rho=st.floats(0.02, 1.0), z=st.floats(0.01, 40.0))
def test_f_v_derivative_matches_fd(k, rho, z):
    h = 1e-5 * max(z, 1.0)
    fd = (f_v(z + h, k, rho) - f_v(z - h, k, rho)) / (2 * h)
    assert f_v_prime(z, k, rho) == pytest.approx(fd, rel=1e-5, abs=1e-9)


@pytest.mark.parametrize("k,rho,z", [(2, 0.1, 0.8), (3, 0.3, 2.5), (5, 0.05, 12.0), (9, 1.0, 4.0)])
def test_free_entropy_derivatives(k, rho, z):
    h = 1e-4 * z
    c = (k - 1) / (2 * k)
    assert (psi_u(z + h, k) - psi_u(z - h, k)) / (2 * h) == pytest.approx(c * f_u(z, k), rel=1e-6)
    assert (psi_v(z + h, k, rho) - psi_v(z - h, k, rho)) / (2 * h) == pytest.approx(c * f_v(z, k, rho), rel=1e-6)


@pytest.mark.parametrize("k", [2, 3, 5, 10])
def test_trivial_fixed_point_is_exact(k):
    for rho in (0.01, 0.3, 1.0):
        assert se_step_scalar(0.0, 0.0, k, 2.0, rho, 3.0) == (0.0, 0.0)
    M0 = np.zeros((k, k))
    if k <= 3:
        Mu, Mv = se_step_matrix(M0, M0, k, 1.0, 0.2, 2.0, QuadratureSpec(order=20))
        assert np.abs(Mu).max() < 1e-30 and np.abs(Mv).max() < 1e-30


@pytest.mark.parametrize("mu,mv", [(0.3, 0.02), (0.8, 0.09)])
def test_matrix_step_preserves_symmetric_ansatz(mu, mv):
    cases = [(2, QuadratureSpec(order=300), 1e-12, 1e-6), (3, QuadratureSpec(order=40), 1e-9, 2e-3),
             (4, QuadratureSpec(method="mc", samples=1 << 15), 5e-5, 5e-4)]
    rho, alpha = 0.1, 2.0
    for k, q, tol_form, tol_val in cases:
        lam = 1.5 * k / np.sqrt(alpha)
        Mu, Mv = se_step_matrix(*symmetric_overlaps(mu, mv, k), k, alpha, rho, lam, q)
        su, sv = scalars_of(Mu, Mv)
        Pu, Pv = symmetric_overlaps(su, sv, k)
        assert np.abs(Mu - Pu).max() < tol_form and np.abs(Mv - Pv).max() < tol_form * 10
        ru, rv = se_step_scalar(mu, mv, k, alpha, rho, lam)
        assert su == pytest.approx(ru, rel=tol_val) and sv == pytest.approx(rv, rel=tol_val)


@settings(max_examples=25, deadline=None)
@given(mu=st.floats(0.0, 1.0), frac=st.floats(0.0, 1.0), rho=st.floats(0.02, 1.0), lam=st.floats(0.1, 4.0))
def test_two_cluster_oracle(mu, frac, rho, lam):
    mv = frac * rho
    a = se_step_scalar(mu, mv, 2, 2.0, rho, lam)
    b = rank1_se_step(mu, mv, 2.0, rho, lam)
    assert a == pytest.approx(b, abs=1e-9)


def test_fixed_point_extremes():
    r = se_fixed_point(2, 2.0, 0.2, 0.2, uninformed_start(0.2))
    assert r.converged and r.m_u < 1e-10 and r.mse(2) == pytest.approx(0.5)
    r = se_fixed_point(3, 2.0, 0.2, 20.0, uninformed_start(0.2))
    assert r.converged and r.m_u > 0.99
    r = se_fixed_point(2, 2.0, 0.2, 2.5, informed_start(0.2), keep_trace=True)
    assert len(r.trace) == r.iterations + 1
    mu, mv = se_step_scalar(r.m_u, r.m_v, 2, 2.0, 0.2, 2.5)
    assert mu == pytest.approx(r.m_u, abs=1e-11) and mv == pytest.approx(r.m_v, abs=1e-11)


def test_departure_straddles_algorithmic_threshold():
    lam_alg = 2 / np.sqrt(2.0)
    assert not departs_from_trivial(2, 2.0, 0.1, 0.99 * lam_alg)
    assert departs_from_trivial(2, 2.0, 0.1, 1.01 * lam_alg)


def test_linearization_coefficients():
    L = se_linearization(3, 1.5, 0.2, 2.0)
    assert L.slope == slope_at_origin(3, 1.5, 2.0) == pytest.approx(1.5 * 4 / 9)
    assert L.slope_fd == pytest.approx(L.slope, rel=1e-5)
    assert L.curvature_fd == pytest.approx(L.curvature, rel=1e-2)
    # at the algorithmic threshold the curvature is k - 4 - 2 sqrt(alpha)
    for k, a in ((2, 2.0), (9, 1.0)):
        assert curvature_at_origin(k, a, k / np.sqrt(a)) == pytest.approx(k - 4 - 2 * np.sqrt(a))
    assert k_tricritical(1.0) == pytest.approx(6.0)
    assert composed_map(0.0, 2, 2.0, 0.1, 1.0) == 0.0
