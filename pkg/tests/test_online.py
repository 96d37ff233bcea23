import numpy as np
import pytest

from nlacc.drivers import (NesterovParams, NesterovStepper, gradient_operator,
                           linear_operator, run_iterations)
from nlacc.extrapolate import IterateWindow, residuals
from nlacc.online import (LastCoefficientStatus, OnlineState,
                          RegularizationSchedule, ZeroLeadingCoefficient,
                          adaptive_nesterov_step, guarded_momentum_step,
                          last_coefficient_check, online_rna_step, run_online,
                          run_adaptive_nesterov, schedule_lambda)
from nlacc.drivers import CombinationRow
from nlacc.problems import synthetic_logistic, synthetic_quadratic


def test_scalar_affine_map_exact_after_two_steps():
    # one-dimensional linear update: two residuals determine the fixed point
    op = linear_operator(np.array([[0.5]]), np.array([2.0]))
    state = OnlineState.start(np.array([10.0]), capacity=5, lambda_rel=0.0)
    online_rna_step(state, op)
    y, diag = online_rna_step(state, op)
    assert y == pytest.approx(2.0, abs=1e-10)


def test_first_step_returns_first_iterate():
    prob = synthetic_quadratic(3, 5.0, seed=0)
    op = gradient_operator(prob, 1.0 / prob.L)
    x0 = np.ones(3)
    state = OnlineState.start(x0, capacity=5)
    y, diag = online_rna_step(state, op)
    assert np.allclose(y, op.apply(x0), atol=1e-14)
    assert diag["c_last"] == pytest.approx(1.0)


def test_online_beats_gradient_descent_tenfold():
    prob = synthetic_quadratic(50, 1e3, seed=1)
    op = gradient_operator(prob, 1.0 / prob.L)
    rng = np.random.default_rng(1)
    x0 = rng.standard_normal(50)
    tol = 1e-6

    x = x0.copy()
    gd_iters = None
    for i in range(1, 200_001):
        x = op.apply(x)
        if np.linalg.norm(prob.gradient(x)) <= tol:
            gd_iters = i
            break
    assert gd_iters is not None

    _, hist = run_online(op, x0, 2000, capacity=10,
                         grad_norm=lambda y: np.linalg.norm(prob.gradient(y)),
                         tol=tol)
    online_iters = len(hist)
    assert hist[-1]["grad_norm"] <= tol
    assert online_iters * 10 <= gd_iters


def test_online_krylov_nesting_monotone():
    prob = synthetic_quadratic(8, 5.0, seed=2)
    op = gradient_operator(prob, 1.0 / prob.L)
    state = OnlineState.start(np.ones(8), capacity=8, lambda_rel=0.0)
    norms = []
    for _ in range(8):
        _, diag = online_rna_step(state, op)
        norms.append(diag["combo_residual_norm"])
    for a, b in zip(norms, norms[1:]):
        assert b <= a * (1.0 + 1e-10)


def test_singular_system_retry_bumps_lambda():
    # a window with two identical pairs is singular at lambda = 0
    op = linear_operator(np.zeros((2, 2)), np.zeros(2))  # g(x) = 0
    state = OnlineState.start(np.array([1.0, 1.0]), capacity=4, lambda_rel=0.0)
    online_rna_step(state, op)   # window: (0, x0)
    y, diag = online_rna_step(state, op)
    assert np.all(np.isfinite(y))


# ---------------------------------------------------------------------------
# last-coefficient classification


def test_last_coefficient_full_rank_windows():
    rng = np.random.default_rng(3)
    for _ in range(20):
        R = rng.standard_normal((10, 4))
        assert last_coefficient_check(R) == LastCoefficientStatus.NONZERO_LAST


def test_last_coefficient_rank_deficient_converged():
    A = np.diag([0.2, 0.5, 0.8])
    op = linear_operator(np.eye(3) - A, np.zeros(3))
    res = run_iterations(op, np.array([1.0, 1.0, 1.0]), 5, capacity=5)
    status = last_coefficient_check(residuals(res.window))
    assert status == LastCoefficientStatus.RANK_DEFICIENT_CONVERGED


def test_last_coefficient_single_column():
    R = np.array([[3.0], [4.0]])
    assert last_coefficient_check(R, c=np.array([1.0])) == \
        LastCoefficientStatus.NONZERO_LAST


# ---------------------------------------------------------------------------
# guarded momentum


def _nesterov_row(i, beta):
    alpha = np.zeros(i)
    beta_vec = np.zeros(i)
    alpha[-1] = 1.0 + beta
    if i >= 2:
        alpha[-2] = -beta
    else:
        beta_vec[0] = -beta
    return CombinationRow(alpha=alpha, beta=beta_vec)


def test_guard_condition_false_reproduces_base_algorithm():
    prob = synthetic_quadratic(4, 9.0, seed=4)
    params = NesterovParams.from_constants(prob.L, prob.mu)
    op = gradient_operator(prob, 1.0 / prob.L)
    beta = params.beta_momentum

    state = OnlineState.start(np.ones(4), capacity=10)
    reject = lambda z, xs, ys: 1.0  # positive: never accept
    ys_guarded = []
    for i in range(1, 6):
        y = guarded_momentum_step(state, _nesterov_row(i, beta), reject, op)
        ys_guarded.append(y)
    assert not any(state.branch_log)

    base = run_iterations(op, np.ones(4), 5, stepper=NesterovStepper(params))
    y_manual = np.ones(4)
    x_prev = np.ones(4)
    for j in range(5):
        x = base.window.X[:, j]
        y_manual = (1.0 + beta) * x - beta * x_prev
        x_prev = x
        assert np.allclose(ys_guarded[j], y_manual, atol=1e-12)


def test_guard_condition_true_returns_extrapolation():
    prob = synthetic_quadratic(4, 9.0, seed=5)
    params = NesterovParams.from_constants(prob.L, prob.mu)
    op = gradient_operator(prob, 1.0 / prob.L)
    state = OnlineState.start(np.ones(4), capacity=10)
    accept = lambda z, xs, ys: -1.0
    for i in range(1, 4):
        y = guarded_momentum_step(state, _nesterov_row(i, params.beta_momentum),
                                  accept, op)
    assert all(state.branch_log)
    # with eta = 1 the returned point recombines the images, never the ys
    assert np.all(np.isfinite(y))


def test_guard_zero_leading_coefficient_rejected():
    prob = synthetic_quadratic(3, 4.0, seed=6)
    op = gradient_operator(prob, 1.0 / prob.L)
    state = OnlineState.start(np.ones(3), capacity=5)
    bad = CombinationRow(alpha=[1.0, 0.0], beta=[0.0, 0.0])
    online_rna_step(state, op)
    with pytest.raises(ZeroLeadingCoefficient):
        guarded_momentum_step(state, bad, lambda z, xs, ys: -1.0, op)


def test_guard_accepts_exact_extrapolation_on_quadratic():
    # once the window determines the minimizer, the descent condition
    # holds at the conditional point and the optimum is returned
    prob = synthetic_quadratic(3, 6.0, seed=7)
    params = NesterovParams.from_constants(prob.L, prob.mu)
    op = gradient_operator(prob, 1.0 / prob.L)

    def descent(z, xs, ys):
        y_prev = ys[:, -1]
        g = prob.gradient(y_prev)
        return prob.value(z) - prob.value(y_prev) + g @ g / (2.0 * prob.L)

    state = OnlineState.start(np.ones(3), capacity=8)
    for i in range(1, 7):
        y = guarded_momentum_step(state, _nesterov_row(i, params.beta_momentum),
                                  descent, op)
    assert state.branch_log[-1]
    assert np.linalg.norm(prob.gradient(y)) <= 1e-6


# ---------------------------------------------------------------------------
# adaptive momentum method


def test_adaptive_step_branches_are_the_only_outputs():
    prob = synthetic_quadratic(10, 100.0, seed=8)
    params = NesterovParams.from_constants(prob.L, prob.mu)
    state = OnlineState.start(np.zeros(10), capacity=10)
    beta = params.beta_momentum
    for i in range(12):
        x_prev_before = state.x_prev if state.x_prev is not None else state.y
        y_ref = state.y
        g_ref = prob.gradient(y_ref)
        y, diag = adaptive_nesterov_step(state, params, prob)
        x_new = y_ref - g_ref / params.L_smooth
        if diag["accepted"]:
            # reconstruction identity: recombining the conditional point
            # reproduces the extrapolated output
            z = diag["conditional_point"]
            assert np.allclose((1.0 + beta) * z - beta * x_prev_before, y,
                               atol=1e-12)
            assert prob.value(z) <= diag["threshold"] + 1e-15
        else:
            assert np.allclose(y, (1.0 + beta) * x_new - beta * x_prev_before,
                               atol=1e-12)


def test_adaptive_run_tracks_plain_momentum():
    prob = synthetic_quadratic(10, 100.0, seed=9)
    params = NesterovParams.from_constants(prob.L, prob.mu)
    iters = 60
    op = gradient_operator(prob, 1.0 / prob.L)
    stepper = NesterovStepper(params)
    y = np.zeros(10)
    x = None
    for i in range(1, iters + 1):
        x = op.apply(y)
        y, _ = stepper.combine(i, x, y)
    f_plain = prob.value(x)
    state, history = run_adaptive_nesterov(prob, np.zeros(10), iters,
                                           params=params)
    f_adaptive = prob.value(state.y)
    assert f_adaptive <= f_plain + 1e-15


# ---------------------------------------------------------------------------
# regularization schedules


def test_schedule_constant_when_exponent_zero():
    sched = RegularizationSchedule(exponent_r=0.0)
    assert schedule_lambda(sched, 0.37) == pytest.approx(1.0)


def test_schedule_power_law_halving():
    sched = RegularizationSchedule(exponent_r=1.0)
    assert schedule_lambda(sched, 0.5) == pytest.approx(0.5)
    assert schedule_lambda(sched, 0.25) == pytest.approx(0.25)


def test_schedule_improves_over_fixed_large_weight():
    prob = synthetic_logistic(30, 100, 1e3, seed=0)
    op = gradient_operator(prob, 1.0 / prob.L)
    x0 = np.zeros(30)
    st_sched = OnlineState.start(x0, capacity=10,
                                 schedule=RegularizationSchedule(exponent_r=1.0))
    st_fixed = OnlineState.start(x0, capacity=10, lambda_rel=10.0)
    for _ in range(400):
        online_rna_step(st_sched, op)
        online_rna_step(st_fixed, op)
    g_sched = np.linalg.norm(prob.gradient(st_sched.y))
    g_fixed = np.linalg.norm(prob.gradient(st_fixed.y))
    assert g_sched < g_fixed
