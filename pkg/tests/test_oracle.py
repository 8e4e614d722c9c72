import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from rkhsbayes.errors import AccuracyError, InputError
from rkhsbayes.gauss import JointGaussian, condition
from rkhsbayes.loss import LossSpec
from rkhsbayes.oracle import (
    QuadratureSpec,
    example_check,
    grid_argmax,
    integrate,
    mc_conditional_mean,
    mixture_marginal,
)


def test_polynomial_and_gaussian_integrals():
    assert abs(integrate(lambda x: x * x, QuadratureSpec(0.0, 1.0)) - 1 / 3) <= 1e-10
    assert abs(integrate(lambda x: math.exp(-x * x), QuadratureSpec(-math.inf, math.inf)) - math.sqrt(math.pi)) <= 1e-8
    assert integrate(lambda x: math.exp(-x), QuadratureSpec(0.0, math.inf)) == pytest.approx(1.0, abs=1e-10)
    assert integrate(lambda x: math.exp(x), QuadratureSpec(-math.inf, 0.0)) == pytest.approx(1.0, abs=1e-10)


def test_example_normalizer_agrees_with_scipy():
    dens = lambda f: math.exp(-f * f - abs(1.0 - f))
    ours = integrate(dens, QuadratureSpec(-math.inf, 1.0, 1e-12)) + integrate(dens, QuadratureSpec(1.0, math.inf, 1e-12))
    ref = sp_integrate.quad(dens, -40, 1, epsabs=1e-14)[0] + sp_integrate.quad(dens, 1, 40, epsabs=1e-14)[0]
    assert ours == pytest.approx(ref, abs=1e-11)
    assert example_check().normalizer == pytest.approx(ref, abs=1e-11)


def test_subdivision_cap_reports_best_estimate():
    spec = QuadratureSpec(0.0, 1.0, atol=1e-14, max_subdivisions=3)
    with pytest.raises(AccuracyError) as info:
        integrate(lambda x: math.sqrt(x), spec)
    assert info.value.best_estimate == pytest.approx(2 / 3, abs=0.05)


def test_quadrature_spec_validation():
    with pytest.raises(InputError):
        QuadratureSpec(0.0, 1.0, atol=0.0)
    with pytest.raises(InputError):
        QuadratureSpec(1.0, 0.0)


def test_mixture_marginal_scipy_cross_check():
    from rkhsbayes.loss import mixture_integrand

    for e, sigma in [(0.5, 0.3), (2.0, 1.0), (-1.0, 0.7)]:
        ref = sp_integrate.quad(lambda t: mixture_integrand(e, t, sigma), 0, np.inf, limit=500)[0]
        assert mixture_marginal(e, sigma) == pytest.approx(ref, abs=1e-9)


def test_example_report():
    r = example_check()
    assert abs(r.f_hat - 0.5) <= 1e-8
    assert r.difference < 0
    assert r.identity_residual < 1e-8
    assert r.E_f_given_y == pytest.approx(r.f_hat + r.difference, abs=1e-15)
    assert set(r.to_dict()) >= {"f_hat", "E_f_given_y", "difference", "identity_residual"}


def test_grid_argmax_examples():
    best, val = grid_argmax(lambda p: -((p[:, 0] - 0.3) ** 2), [(0.0, 1.0)], 101)
    assert best[0] == pytest.approx(0.3, abs=1e-15) and val == pytest.approx(0.0, abs=1e-30)
    # the scalar coefficient problem f^2 + |1 - f|
    best, _ = grid_argmax(lambda p: -(p[:, 0] ** 2 + np.abs(1 - p[:, 0])), [(-2.0, 2.0)], 81)
    assert abs(best[0] - 0.5) <= 0.05
    with pytest.raises(InputError):
        grid_argmax(lambda p: p[:, 0], [(0, 1)] * 4, 10)
    with pytest.raises(InputError):
        grid_argmax(lambda p: p[:, 0], [(0, 1)], 102)


def test_mc_conditional_mean_examples():
    ind = JointGaussian([1.5], [0.0], [[1.0]], [[0.0]], [[1.0]])
    est, err = mc_conditional_mean(ind, [2.0], draws=200_000, seed=1)
    assert abs(est[0] - 1.5) <= 3 * err[0]
    # nearly perfect correlation: the regression slope is exactly one
    corr = JointGaussian([0.0], [0.0], [[1.0]], [[1.0 - 1e-9]], [[1.0]])
    est, err = mc_conditional_mean(corr, [0.7], draws=100_000, seed=2)
    assert abs(est[0] - 0.7) <= 3 * err[0] + 1e-6
    two = JointGaussian([0.0], [0.0, 0.0], [[2.0]], [[1.0, 0.0]], np.eye(2))
    est, _ = mc_conditional_mean(two, [4.0, -1.0], draws=1_000_000, seed=3)
    assert abs(est[0] - condition(two, [4.0, -1.0])[0][0]) < 0.01
    with pytest.raises(AccuracyError):
        mc_conditional_mean(two, [0.0, 0.0], draws=100)
