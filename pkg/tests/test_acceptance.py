"""Acceptance gate: every criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per
criterion. The benchmark is the unbalanced-disk regulation problem with
the table parameters (N=10, Q=diag(8, 0.1), R=0.5, ts=0.01, bounds
+-2pi / +-10pi / +-10 V, x0 = [-2pi, 0]).

Realized bound satisfaction is asserted at the QP's certified primal
feasibility tolerance (1e-8), which is the solver's own optimality
contract for active constraints.
"""
import time

import numpy as np
import pytest

from lpvmpc.artifacts import coverage_report
from lpvmpc.errorbank import ErrorBank, ErrorPrediction
from lpvmpc.gp import Kernel, kernel_eval, kernel_matrix, make_gp, predict
from lpvmpc.mpc import MpcConfig, closed_step, condense, run_loop
from lpvmpc.qp import solve
from lpvmpc.stabilizer import closed_A

from conftest import Q_MPC, R_MPC, U_BOUNDS, X_BOUNDS

STEPS = 100
X0 = np.array([-2.0 * np.pi, 0.0])
ZSCORE = 2.576
BOUND_TOL = 1e-8          # certified KKT primal tolerance of the QP


def _report(num: int, ok: bool, desc: str) -> None:
    print(f"acceptance criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {desc}")
    assert ok, f"criterion {num} failed: {desc}"


def _mpc_cfg(**kw):
    base = dict(N=10, Q=Q_MPC, R=R_MPC, x_bounds=X_BOUNDS, u_bounds=U_BOUNDS,
                zscore=ZSCORE)
    base.update(kw)
    return MpcConfig(**base)


@pytest.fixture(scope="module")
def corrected(disk_stabilized):
    bank = ErrorBank(N=10, n_x=2, seed=0)
    t0 = time.perf_counter()
    log = run_loop(disk_stabilized, _mpc_cfg(), bank, X0, STEPS)
    wall = time.perf_counter() - t0
    return log, bank, wall


@pytest.fixture(scope="module")
def baseline(disk_stabilized):
    bank = ErrorBank(N=10, n_x=2, seed=0)
    log = run_loop(disk_stabilized, _mpc_cfg(error_correction=False, zscore=0.0),
                   bank, X0, STEPS)
    return log, bank


def test_criterion_1_disk_regulation_convergence(corrected):
    log, _, wall = corrected
    converged = log.status == "completed" and log.completed_steps == STEPS
    final = float(np.max(np.abs(log.states[STEPS])))
    ok = converged and final <= 0.1 and wall < 10.0
    _report(1, ok, f"||x_100||_inf = {final:.3e} <= 0.1, runtime {wall:.2f}s < 10s")


def test_criterion_2_no_overshoot(corrected):
    log, _, _ = corrected
    theta = log.states[:, 0]
    monotone = bool(np.all(np.diff(theta) >= -1e-12))
    overshoot = float(max(0.0, theta.max()))
    ok = monotone and overshoot <= 0.05
    _report(2, ok, f"theta monotone={monotone}, overshoot={overshoot:.3e} <= 0.05")


def test_criterion_3_constraint_satisfaction(corrected):
    log, _, _ = corrected
    th, om = log.states[:, 0], log.states[:, 1]
    state_ok = (np.all(np.abs(th) <= 2 * np.pi + BOUND_TOL)
                and np.all(np.abs(om) <= 10 * np.pi + BOUND_TOL))
    input_ok = np.all(np.abs(log.u_applied) <= 10.0 + BOUND_TOL)
    ok = bool(state_ok and input_ok)
    _report(3, ok, "all realized states and applied inputs within table bounds "
                   f"(max|th|={np.max(np.abs(th)):.6f}, max|om|={np.max(np.abs(om)):.6f}, "
                   f"max|u|={np.max(np.abs(log.u_applied)):.9f})")


def test_criterion_4_zero_initial_error(corrected):
    log, bank, _ = corrected
    exact = all(
        np.array_equal(xt[0], log.states[k]) and np.array_equal(xp[0], log.states[k])
        for k, (xt, xp) in enumerate(zip(log.truth_rollouts, log.pred_rollouts))
    )
    never_stored = all(col.shape == (11, 2) for col in bank.columns)
    ok = exact and never_stored
    _report(4, ok, "e_{0|k} = 0 exactly for every k; horizon row 0 never stored")


def test_criterion_5_uncertainty_coverage(corrected):
    log, _, _ = corrected
    rows = []
    for step, xt, xp in zip(log.mpc_steps, log.truth_rollouts, log.pred_rollouts):
        if not 5 <= step.k <= 100:
            continue
        for i in range(1, 11):
            for n in range(2):
                if not step.e_hat.fitted[i - 1, n]:
                    continue
                rows.append({
                    "n": n + 1,
                    "e": xt[i, n] - xp[i, n],
                    "ehat_mean": step.e_hat.mean[i - 1, n],
                    "ehat_std": step.e_hat.std[i - 1, n],
                })
    rep = coverage_report(rows, zscore=ZSCORE)
    cov = rep["overall"]["coverage"]
    ok = cov is not None and cov >= 0.90
    _report(5, ok, f"coverage {cov:.4f} >= 0.90 over {rep['overall']['count']} rows")


def test_criterion_6_qp_certification(corrected):
    log, _, _ = corrected
    worst_primal = max(s.qp_diag.kkt_primal for s in log.mpc_steps)
    worst_stat = max(s.qp_diag.kkt_stationarity for s in log.mpc_steps)
    all_optimal = all(s.qp_diag.status == "optimal" for s in log.mpc_steps)
    ok = all_optimal and worst_primal <= 1e-8 and worst_stat <= 1e-6
    _report(6, ok, f"KKT primal <= {worst_primal:.2e} (1e-8), "
                   f"stationarity <= {worst_stat:.2e} (1e-6), all optimal")


def test_criterion_7_gp_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 13))
        X = rng.uniform(-3.0, 3.0, size=n)
        Y = rng.normal(size=n)
        kern = Kernel("se", float(rng.uniform(0.1, 4.0)), float(rng.uniform(0.2, 2.5)))
        noise2 = float(rng.uniform(1e-8, 1e-2))
        gp = make_gp(X, Y, kern, noise2)
        t_star = float(rng.uniform(-4.0, 4.0))
        post = predict(gp, t_star)
        # direct dense solve, no Cholesky
        K = kernel_matrix(kern, X) + (noise2 + gp.jitter) * np.eye(n)
        k_star = kernel_matrix(kern, X, [t_star])[:, 0]
        mean_ref = k_star @ np.linalg.solve(K, Y)
        var_ref = kernel_eval(kern, t_star, t_star) - k_star @ np.linalg.solve(K, k_star)
        worst = max(worst, abs(post.mean - mean_ref),
                    abs(post.variance - max(var_ref, 0.0)))
    ok = worst < 1e-8
    _report(7, ok, f"100 random instances: worst |posterior - dense oracle| = {worst:.2e} < 1e-8")


def test_criterion_8_baseline_reduction(disk_stabilized, baseline):
    """Independently coded plain receding-horizon loop (same condensation,
    no error bank) must reproduce the error_correction=off, zscore=0 run
    bit for bit."""
    log, _ = baseline
    cfg = _mpc_cfg(error_correction=False, zscore=0.0)
    N = cfg.N
    x = X0.copy()
    p_hat = np.tile(disk_stabilized.base.rho(x), (N + 1, 1))
    refs = np.zeros((N + 1, 2))
    states = [x.copy()]
    inputs = []
    for _ in range(STEPS):
        prob = condense(disk_stabilized, cfg, p_hat[:N], x, refs,
                        ErrorPrediction.zero(N, 2))
        sol = solve(prob, max_iter=cfg.qp_max_iter)
        assert sol.status == "optimal"
        u = sol.z.reshape(N, 1)
        xs = [x.copy()]
        for i in range(N):
            xs.append(closed_step(disk_stabilized, xs[-1], u[i]))
        xs.append(closed_step(disk_stabilized, xs[-1], u[N - 1]))
        p_hat = np.array([disk_stabilized.base.rho(xs[i + 1]) for i in range(N + 1)])
        inputs.append(u[0].copy())
        x = xs[1]
        states.append(x.copy())
    ok = (np.array_equal(log.states, np.asarray(states))
          and np.array_equal(log.u_mpc, np.asarray(inputs)))
    _report(8, ok, "uncorrected loop bit-identical to the independent plain LPVMPC")


def test_criterion_9_stabilizer_certificate(disk_stabilized):
    radii = [
        float(np.max(np.abs(np.linalg.eigvals(closed_A(disk_stabilized, [p])))))
        for p in np.linspace(-0.21723, 1.0, 101)
    ]
    Ac = closed_A(disk_stabilized, disk_stabilized.p_nominal)
    W = Q_MPC + disk_stabilized.K.T @ R_MPC @ disk_stabilized.K
    resid = float(np.max(np.abs(disk_stabilized.P - Ac.T @ disk_stabilized.P @ Ac - W)))
    ok = max(radii) < 1.0 and resid <= 1e-10
    _report(9, ok, f"grid spectral radius {max(radii):.4f} < 1, "
                   f"Lyapunov residual {resid:.2e} <= 1e-10")


def test_criterion_10_comparison_run(corrected, baseline):
    log_c, _, _ = corrected
    log_b, _ = baseline
    both_done = log_c.status == "completed" and log_b.status == "completed"

    def one_step_error_medians(log):
        mags = []
        for step, xt, xp in zip(log.mpc_steps, log.truth_rollouts, log.pred_rollouts):
            if 10 <= step.k <= 100:
                mags.append(float(np.linalg.norm(xt[1] - xp[1])))
        return float(np.median(mags))

    med_c = one_step_error_medians(log_c)
    med_b = one_step_error_medians(log_b)
    ok = both_done and med_c <= 1.10 * med_b + 1e-15
    _report(10, ok, f"median |e_1| with correction {med_c:.3e} <= "
                    f"1.1 x {med_b:.3e} without; both runs completed")
