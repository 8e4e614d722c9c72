import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import rkhsbayes.solver as solver
from rkhsbayes.errors import ConvergenceError, InputError
from rkhsbayes.kernel import KernelSpec, gram
from rkhsbayes.loss import LossSpec, calibrated_absolute
from rkhsbayes.oracle import grid_argmax
from rkhsbayes.solver import (
    evaluate,
    map_at_locations,
    objective,
    smoothed_objective,
    solve_general,
    solve_quadratic,
)

X64 = np.arange(64) / 63.0
ONE = np.array([[1.0]])


def spline_instance(rng, n):
    x = np.sort(rng.random(n))
    return gram(KernelSpec(), x), rng.standard_normal(n)


def test_scalar_examples():
    assert solve_quadratic(ONE, [1.0], 1.0).coefficients[0] == pytest.approx(0.5, abs=1e-15)
    est = solve_general(ONE, [1.0], LossSpec("absolute"), 1.0)
    assert est.coefficients[0] == pytest.approx(0.5, abs=1e-8)
    g = gram(KernelSpec(), [0.0])
    e = solve_general(g, [1.0], LossSpec("absolute"), 1.0 / 3.0)
    assert evaluate(e, 0.0) == pytest.approx(0.5, abs=1e-8)


def test_shrinkage_limit(rng):
    g, y = spline_instance(rng, 10)
    est = solve_quadratic(g, y, 1e12)
    assert np.allclose(est.coefficients, y / 1e12, rtol=1e-9)
    assert np.max(np.abs(evaluate(est, X64))) < 1e-10


def test_quadratic_matches_dense_solve(rng):
    g, y = spline_instance(rng, 16)
    est = solve_quadratic(g, y, 0.05)
    ref = np.linalg.solve(g.entries + 0.05 * np.eye(16), y)
    assert np.max(np.abs(est.coefficients - ref)) <= 1e-10 * (1 + np.max(np.abs(ref)))
    assert est.diagnostics.residual <= 1e-8


@given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(1e-4, 10))
def test_general_with_quadratic_losses_matches_closed_form(seed, gamma):
    g, y = spline_instance(np.random.default_rng(seed), 12)
    a = solve_general(g, y, LossSpec("quadratic"), gamma).coefficients
    b = solve_quadratic(g, y, gamma).coefficients
    assert np.max(np.abs(a - b)) <= 1e-6 * (1 + np.max(np.abs(b)))


def _objectives(points, k, y, losses, gamma):
    # vectorized exact objective for rows of c
    r = y[None, :] - points @ k.T
    total = np.zeros(points.shape[0])
    for i, spec in enumerate(losses):
        total += np.asarray(spec.value(r[:, i]))
    return total + gamma * np.einsum("mi,ij,mj->m", points, k, points)


@pytest.mark.parametrize("seed", range(3))
def test_absolute_loss_beats_grid(seed):
    rng = np.random.default_rng(seed)
    g, y = spline_instance(rng, 3)
    gamma = float(rng.uniform(0.2, 1.0))
    losses = [LossSpec("absolute")] * 3
    est = solve_general(g, y, losses, gamma)
    best, val = grid_argmax(lambda p: -_objectives(p, g.entries, y, losses, gamma), [(-2, 2)] * 3, 60)
    assert objective(est.coefficients, g, y, losses, gamma) <= -val + 1e-9


@given(seed=st.integers(0, 2**32 - 1), mu=st.sampled_from([1.0, 0.1, 1e-2]))
def test_smoothed_gradient_matches_central_differences(seed, mu):
    rng = np.random.default_rng(seed)
    n = 6
    g, y = spline_instance(rng, n)
    kinds = [LossSpec("quadratic"), LossSpec("absolute"), LossSpec("vapnik", eps=0.3), LossSpec("huber", delta=0.5)]
    losses = [kinds[i % 4] for i in range(n)]
    c = rng.standard_normal(n)
    gamma = float(rng.uniform(0.01, 1))
    _, grad = smoothed_objective(c, g, y, losses, gamma, mu)
    h = 1e-6
    fd = np.array(
        [
            (smoothed_objective(c + h * e, g, y, losses, gamma, mu)[0] - smoothed_objective(c - h * e, g, y, losses, gamma, mu)[0])
            / (2 * h)
            for e in np.eye(n)
        ]
    )
    assert np.linalg.norm(fd - grad) <= 1e-4 * max(np.linalg.norm(grad), 1.0)


@pytest.mark.parametrize("seed", range(20))
def test_optimality_certificate_small_instances(seed):
    rng = np.random.default_rng(seed)
    g, y = spline_instance(rng, int(rng.integers(1, 9)))
    kind = [LossSpec("absolute"), LossSpec("vapnik", eps=0.2)][seed % 2]
    est = solve_general(g, y, kind, float(rng.uniform(0.05, 2)))
    d = est.diagnostics
    assert d.gradient_norm <= 1e-6 * (1 + abs(d.objective))


@pytest.mark.parametrize("seed", range(5))
def test_descent_is_monotone_within_each_stage(seed):
    rng = np.random.default_rng(seed)
    g, y = spline_instance(rng, 20)
    est = solve_general(g, y, LossSpec("absolute"), 0.01)
    for mu, group in itertools.groupby(est.diagnostics.trace, key=lambda t: t[0]):
        vals = [v for _, v in group]
        assert all(b <= a + 1e-12 * abs(a) for a, b in zip(vals, vals[1:])), mu


@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.1, 10))
def test_scaling_consistency(seed, alpha):
    rng = np.random.default_rng(seed)
    g, y = spline_instance(rng, 8)
    gamma = float(rng.uniform(0.05, 1))
    a = solve_general(g, y, LossSpec("absolute"), gamma).coefficients
    b = solve_general(g, y, LossSpec("absolute", scale=alpha), alpha * gamma).coefficients
    assert np.max(np.abs(a - b)) <= 1e-8 * (1 + np.max(np.abs(a)))


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_benchmark_scale_l1_matches_conic_solver():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(11)
    y = np.exp(np.sin(8 * X64)) + 0.3 * rng.standard_normal(64)
    g = gram(KernelSpec(), X64)
    spec = calibrated_absolute(0.3)
    gamma = 0.09 / 500
    est = solve_general(g, y, spec, gamma)
    k = g.entries
    low = np.linalg.cholesky(k)
    c = cp.Variable(64)
    prob = cp.Problem(cp.Minimize(spec.scale * cp.sum(cp.abs(y - k @ c)) + gamma * cp.sum_squares(low.T @ c)))
    prob.solve(solver=cp.CLARABEL)
    ours = objective(est.coefficients, g, y, spec, gamma)
    theirs = objective(c.value, g, y, spec, gamma)
    assert ours <= theirs + 1e-6 * abs(theirs)
    assert np.max(np.abs(k @ (c.value - est.coefficients))) < 0.02


def test_evaluate_zero_and_interpolation_limit(rng):
    g, y = spline_instance(rng, 6)
    zero = solver.RepresenterEstimate(np.zeros(6), g.locations, g.kernel, 1.0)
    assert np.all(evaluate(zero, X64) == 0.0)
    gaps = []
    for gamma in (1e-2, 1e-4, 1e-6, 1e-8):
        est = solve_quadratic(g, y, gamma)
        gaps.append(np.max(np.abs(evaluate(est, g.locations) - y)))
    assert all(b < a for a, b in zip(gaps, gaps[1:])) and gaps[-1] < 1e-3 * gaps[0]


def test_map_at_locations_basic(rng):
    g, y = spline_instance(rng, 5)
    est = solve_general(g, y, LossSpec("absolute"), 0.1)
    base = map_at_locations(est)
    assert base.shape == (5,) and np.array_equal(base, evaluate(est, g.locations))
    dup = map_at_locations(est, [g.locations[2], 0.5])
    assert dup[5] == base[2]


def _joint_log_density(points, k, y, sigma):
    # -sum |y_i - f_i| sqrt(2)/sigma - f^T K^{-1} f / 2 over the first N coordinates + prior
    n = y.size
    prec = np.linalg.inv(k)
    lik = -np.sqrt(2) / sigma * np.sum(np.abs(y[None, :] - points[:, :n]), axis=1)
    return lik - 0.5 * np.einsum("mi,ij,mj->m", points, prec, points)


def test_map_matches_joint_grid_toy():
    x = np.array([0.1, 0.7])
    extra = np.array([0.4])
    spec = KernelSpec()
    lam, sigma = 0.3, 0.8
    ktot = lam * gram(spec, np.concatenate([x, extra])).entries
    y = np.array([0.6, -0.4])
    est = solve_general(gram(spec, x), y, calibrated_absolute(sigma), sigma**2 / lam)
    f = map_at_locations(est, extra)
    best, _ = grid_argmax(lambda p: _joint_log_density(p, ktot, y, sigma), [(-2, 2)] * 3, 80)
    assert np.max(np.abs(best - f)) <= 0.05


def test_input_errors():
    with pytest.raises(InputError):
        solve_quadratic(ONE, [1.0], 0.0)
    with pytest.raises(InputError):
        solve_general(ONE, [1.0, 2.0], LossSpec("absolute"), 1.0)
    with pytest.raises(InputError):
        solve_general(np.eye(2), [1.0, 2.0], [LossSpec("absolute")], 1.0)


def test_convergence_error_carries_iterate(monkeypatch, rng):
    monkeypatch.setattr(solver, "MAX_INNER", 1)
    g, y = spline_instance(rng, 10)
    with pytest.raises(ConvergenceError) as info:
        solve_general(g, y, LossSpec("absolute"), 1e-3)
    assert info.value.last_iterate.shape == (10,)
    assert info.value.residual > 0
