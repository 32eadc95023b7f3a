import numpy as np
import pytest
from scipy import stats

from vecsense.denoisers import BlockSoft, JamesStein
from vecsense.distributions import StdGaussian
from vecsense.exceptions import DivergedError
from vecsense.harness import fit_logistic_pt
from vecsense.risk import m_bst, m_js, tau_minimax
from vecsense.signal_model import gen_measurement, gen_signal, make_rng, relative_error
from vecsense.solvers import (
    SolveOptions,
    array_amp,
    general_vcs,
    group_bp_admm,
    oracle_recover,
    softsense,
    steinsense,
)


def problem(N, B, eps, delta, seed, dist=StdGaussian()):
    rng = make_rng(seed)
    sig = gen_signal(N, B, eps, dist, rng)
    n = int(np.floor(N * delta + 0.5))
    A = gen_measurement(N, n, rng)
    return A, A @ sig.X, sig


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(max_iters=0)


def test_zero_measurements_give_zero():
    A = gen_measurement(50, 20, 0)
    Y = np.zeros((20, 4))
    for res in (steinsense(A, Y), softsense(A, Y, 0.2), general_vcs(A, Y, BlockSoft(1.0))):
        assert res.iters == 1 and res.converged
        assert np.all(res.Xhat == 0)
    res = array_amp(A, np.zeros(20), BlockSoft(1.0), 5)
    assert np.all(res.Xhat == 0) and res.Xhat.shape == (10, 5)
    assert np.all(group_bp_admm(A, Y).Xhat == 0)


def test_steinsense_recovers_and_is_deterministic():
    A, Y, sig = problem(300, 6, 0.1, 0.5, 1)
    r1 = steinsense(A, Y, SolveOptions(record_trace=True))
    r2 = steinsense(A, Y)
    assert r1.Xhat.tobytes() == r2.Xhat.tobytes()
    assert relative_error(r1.Xhat, sig.X)[1]
    assert r1.iters <= 300 and len(r1.trace) == r1.iters
    assert r1.residual_norm == pytest.approx(np.linalg.norm(Y - A @ r1.Xhat))


def test_steinsense_requires_B3():
    A, Y, _ = problem(100, 2, 0.1, 0.5, 2)
    with pytest.raises(ValueError, match="B >= 3"):
        steinsense(A, Y)


def test_covariance_psd_every_iteration():
    A, Y, _ = problem(200, 5, 0.2, 0.5, 3)
    res = general_vcs(A, Y, JamesStein(), SolveOptions(max_iters=30, record_trace=True))
    assert len(res.trace) == res.iters
    for rec in res.trace:
        assert rec["min_eig_S"] >= -1e-12 * max(rec["trace_S"], 1.0)


def test_steinsense_rotation_equivariance():
    A, Y, _ = problem(200, 5, 0.15, 0.5, 4)
    Q = stats.ortho_group.rvs(5, random_state=4)
    X1 = steinsense(A, Y).Xhat
    X2 = steinsense(A, Y @ Q).Xhat
    assert np.allclose(X2, X1 @ Q, atol=1e-8)


def test_fixed_point_stays_put():
    A, Y, sig = problem(300, 8, 0.1, 0.4, 5)
    res = steinsense(A, Y, SolveOptions(max_iters=10, converge_tol=0), x_init=sig.X)
    assert res.iters == 10
    assert relative_error(res.Xhat, sig.X)[0] < 1e-10


def test_schedule_forms():
    A, Y, sig = problem(200, 4, 0.1, 0.5, 6)
    tau = tau_minimax(0.1, 4)
    a = general_vcs(A, Y, BlockSoft(tau)).Xhat
    b = general_vcs(A, Y, [BlockSoft(tau)]).Xhat
    c = general_vcs(A, Y, lambda t: BlockSoft(tau)).Xhat
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert np.array_equal(a, softsense(A, Y, 0.1).Xhat)


def test_divergence_is_reported():
    A, Y, _ = problem(100, 4, 0.1, 0.5, 7)
    Y[0, 0] = np.inf
    with pytest.raises(DivergedError, match="diverged at iteration 1"):
        steinsense(A, Y)


def test_softsense_full_sampling_succeeds():
    A, Y, sig = problem(200, 5, 0.2, 1.0, 8)
    assert relative_error(softsense(A, Y, 0.2).Xhat, sig.X)[1]


def test_admm_square_system_exact():
    A, Y, sig = problem(120, 3, 0.3, 1.0, 9)
    res = group_bp_admm(A, Y)
    assert relative_error(res.Xhat, sig.X)[0] < 1e-9


def test_admm_feasible_output():
    A, Y, _ = problem(120, 3, 0.3, 0.5, 10)
    res = group_bp_admm(A, Y, SolveOptions(max_iters=50))
    assert res.residual_norm < 1e-8 * np.linalg.norm(Y)


def test_array_amp_shape_checks():
    A = gen_measurement(12, 5, 0)
    with pytest.raises(ValueError, match="divisible"):
        array_amp(A, np.ones(5), BlockSoft(1.0), 5)
    with pytest.raises(ValueError):
        array_amp(A, np.ones(4), BlockSoft(1.0), 3)


def test_array_amp_recovers_above_pt():
    rng = make_rng(11)
    N, B, eps = 400, 2, 0.1
    sig = gen_signal(N, B, eps, StdGaussian(), rng)
    n = int(round((m_bst(eps, B) + 0.1) * N * B))
    A = gen_measurement(N * B, n, rng)
    res = array_amp(A, A @ sig.X.ravel(), BlockSoft(tau_minimax(eps, B)), B)
    assert relative_error(res.Xhat, sig.X)[1]


def test_oracle_recover():
    rng = make_rng(12)
    sig = gen_signal(100, 4, 0.2, StdGaussian(), rng)
    k = sig.support.size
    A = gen_measurement(100, k, rng)
    Y = A @ sig.X
    assert relative_error(oracle_recover(A, Y, sig.support), sig.X)[0] < 1e-10
    A2 = gen_measurement(100, 40, rng)
    assert relative_error(oracle_recover(A2, A2 @ sig.X, sig.support), sig.X)[0] < 1e-10
    wrong = np.setdiff1d(np.arange(100), sig.support)[:k]
    err, ok = relative_error(oracle_recover(A2, A2 @ sig.X, wrong), sig.X)
    assert not ok and err > 0.9
    with pytest.raises(ValueError, match="underdetermined even for oracle"):
        oracle_recover(A2, A2 @ sig.X, np.arange(41))


def _cell_successes(solve, N, B, eps, delta, reps, seed0):
    out = []
    for r in range(reps):
        A, Y, sig = problem(N, B, eps, delta, seed0 + r)
        out.append(relative_error(solve(A, Y), sig.X)[1])
    return out


@pytest.mark.slow
def test_success_monotone_in_delta():
    M = m_js(0.2, 6)
    deltas = [M - 0.08 + 0.04 * i for i in range(5)]
    fr = [sum(_cell_successes(lambda A, Y: steinsense(A, Y).Xhat, 250, 6, 0.2, d, 20, 100)) for d in deltas]
    assert all(b >= a - 1 for a, b in zip(fr, fr[1:])), fr


@pytest.mark.slow
def test_array_amp_matches_general_vcs_for_B1():
    eps, N, reps = 0.2, 500, 10
    tau = tau_minimax(eps, 1)
    M = m_bst(eps, 1)
    deltas = [round(M - 0.1 + 0.02 * i, 6) for i in range(11)]
    recs = {"vcs": [], "arr": []}
    for d in deltas:
        for r in range(reps):
            A, Y, sig = problem(N, 1, eps, d, 500 + r)
            x1 = general_vcs(A, Y, BlockSoft(tau)).Xhat
            x2 = array_amp(A, Y.ravel(), BlockSoft(tau), 1).Xhat
            recs["vcs"].append({"epsilon": eps, "delta": d, "rep": r, "success": relative_error(x1, sig.X)[1]})
            recs["arr"].append({"epsilon": eps, "delta": d, "rep": r, "success": relative_error(x2, sig.X)[1]})
    pt1 = fit_logistic_pt(recs["vcs"]).delta_pt
    pt2 = fit_logistic_pt(recs["arr"]).delta_pt
    assert abs(pt1 - pt2) < 0.03, (pt1, pt2)
