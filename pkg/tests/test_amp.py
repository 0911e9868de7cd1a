import numpy as np
import pytest

from sparse_gmm.amp import AmpConfig, AmpDivergence, amp_init, amp_run, amp_step
from sparse_gmm.model import ModelParams, generate_instance
from sparse_gmm.state_evolution import se_fixed_point, uninformed_start


def _instance(lam, rho=0.3, d=300, k=2, alpha=2.0, seed=0):
    return generate_instance(ModelParams(k=k, alpha=alpha, rho=rho, lam=lam, d=d, seed=seed))


@pytest.mark.parametrize("bad", [dict(gamma=1.0), dict(gamma=-0.1), dict(epsilon=0.0), dict(tau=0.0),
                                 dict(init_mode="oracle"), dict(max_iters=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        AmpConfig(**bad)


def test_informative_tau_one_starts_at_truth():
    inst = _instance(2.0)
    st = amp_init(inst, AmpConfig(init_mode="informative", tau=1.0))
    np.testing.assert_array_equal(st.U_hat, inst.U_star)
    np.testing.assert_array_equal(st.V_hat, inst.V_star)


def test_zero_signal_stays_uninformative():
    inst = _instance(0.0)
    tr = amp_run(inst, AmpConfig(max_iters=200))
    assert tr.converged
    assert abs(tr.final_mse - 0.5) < 0.02


def test_strong_signal_is_recovered_and_tracks_se():
    lam = 3.0
    inst = _instance(lam, d=1000)
    tr = amp_run(inst, AmpConfig(seed=1))
    assert tr.converged
    se = se_fixed_point(2, 2.0, 0.3, lam, uninformed_start(0.3))
    assert tr.final_mse == pytest.approx(se.mse(2), abs=0.03)
    r = tr.records[-1]
    assert r.mse_frobenius >= 0 and r.tr_Mv > 0


def test_step_is_deterministic_and_damping_mixes_fields():
    inst = _instance(2.5)
    p = inst.params
    st0 = amp_init(inst, AmpConfig(seed=3))
    a = amp_step(inst.X, p.lam, p.s, p.rho, st0, 0.0)
    b = amp_step(inst.X, p.lam, p.s, p.rho, st0, 0.0)
    np.testing.assert_array_equal(a.U_hat, b.U_hat)
    und = amp_step(inst.X, p.lam, p.s, p.rho, a, 0.0)
    dmp = amp_step(inst.X, p.lam, p.s, p.rho, a, 0.5)
    np.testing.assert_allclose(dmp.B_u, 0.5 * und.B_u + 0.5 * a.B_u, atol=1e-12)
    np.testing.assert_allclose(dmp.A_v, 0.5 * und.A_v + 0.5 * a.A_v, atol=1e-12)
    for S in (a.sigma_u, a.sigma_v):
        np.testing.assert_allclose(S, S.T)
        assert np.linalg.eigvalsh(S).min() > -1e-9


def test_three_clusters_run():
    inst = _instance(6.0, rho=0.5, d=400, k=3)
    tr = amp_run(inst, AmpConfig(seed=2))
    assert tr.final_mse < 0.2


def test_trace_csv(tmp_path):
    tr = amp_run(_instance(2.5), AmpConfig(max_iters=5))
    tr.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iter,tr_Mu,tr_Mv,mse_trace_form,mse_frobenius,damping,converged"
    assert len(lines) == len(tr.records) + 1


def test_divergence_is_reported_with_trace(monkeypatch):
    import sparse_gmm.amp as amp

    inst = _instance(2.0)

    def bad_step(*args, **kw):
        st = amp_step(*args, **kw)
        st.U_hat = st.U_hat * np.nan
        return st

    monkeypatch.setattr(amp, "amp_step", bad_step)
    with pytest.raises(AmpDivergence) as exc:
        amp_run(inst, AmpConfig(max_iters=10))
    assert len(exc.value.trace.records) == 1
    with pytest.raises(AmpDivergence):
        amp_run(inst, AmpConfig(max_iters=10, auto_damping=True, max_restarts=2))
