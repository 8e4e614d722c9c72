"""Gaussian conditioning, GP posterior mean and marginal likelihood.

With quadratic loss the posterior mean of the random field at ``x`` is
``k(x)^T (K + gamma I)^{-1} y`` where ``gamma = sigma^2 / lambda``, which is
the same function the regularized kernel estimate produces.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import InputError
from .kernel import GramMatrix, KernelSpec, cross, factor, gram

LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class JointGaussian:
    mean_u: np.ndarray
    mean_v: np.ndarray
    cov_uu: np.ndarray
    cov_uv: np.ndarray
    cov_vv: np.ndarray

    def __post_init__(self):
        for name in ("mean_u", "mean_v"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("cov_uu", "cov_uv", "cov_vv"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        nu, nv = self.mean_u.size, self.mean_v.size
        if (
            self.cov_uu.shape != (nu, nu)
            or self.cov_vv.shape != (nv, nv)
            or self.cov_uv.shape != (nu, nv)
        ):
            raise InputError("inconsistent JointGaussian block dimensions")

    @property
    def joint_cov(self) -> np.ndarray:
        return np.block([[self.cov_uu, self.cov_uv], [self.cov_uv.T, self.cov_vv]])

    @property
    def joint_mean(self) -> np.ndarray:
        return np.concatenate([self.mean_u, self.mean_v])


@dataclass(frozen=True)
class Hyperparams:
    """Kernel scale ``lam`` and noise variance ``sigma2``."""

    lam: float
    sigma2: float

    def __post_init__(self):
        if not self.lam > 0 or not self.sigma2 > 0:
            raise InputError("lambda and sigma2 must be positive")

    @property
    def gamma(self) -> float:
        return self.sigma2 / self.lam


def condition(j: JointGaussian, v_value):
    """Mean and covariance of ``u`` given ``v = v_value``.

    Solves with a Cholesky factor of ``cov_vv``; the returned covariance does
    not depend on ``v_value``.
    """
    v_value = np.atleast_1d(np.asarray(v_value, dtype=float))
    if v_value.shape != j.mean_v.shape:
        raise InputError("v_value has the wrong dimension")
    fac = factor(j.cov_vv)
    mean = j.mean_u + j.cov_uv @ fac.solve(v_value - j.mean_v)
    cov = j.cov_uu - j.cov_uv @ fac.solve(j.cov_uv.T)
    return mean, (cov + cov.T) / 2.0


def gp_posterior_mean(spec: KernelSpec, hp: Hyperparams, data: Dataset, x):
    """Posterior mean ``E[F(x) | y]`` under quadratic loss.

    ``x`` may be a scalar or an array of query locations.
    """
    g = gram(spec, data.x)
    y = data.y
    fac = factor(g.entries + hp.gamma * np.eye(g.n))
    weights = fac.solve(y)
    scalar = np.ndim(x) == 0
    k = cross(spec, x, g.locations)
    out = k @ weights
    return float(out[0]) if scalar else out


def log_marginal_gaussian(lam: float, sigma2, gram: GramMatrix, y) -> float:
    """``log N(y; 0, lam K + sigma2 I)`` with the standard ``(2 pi)^(N/2)`` normalizer.

    ``sigma2`` may also be a vector of per-measurement noise variances.
    """
    noise = np.asarray(sigma2, dtype=float)
    if not lam > 0 or not np.all(noise > 0):
        raise InputError("lambda and sigma2 must be positive")
    y = np.asarray(y, dtype=float)
    k = gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram, dtype=float)
    n = y.size
    c = lam * k
    c[np.diag_indices_from(c)] += noise
    fac = factor(c)
    alpha = fac.solve(y)
    return -0.5 * (float(y @ alpha) + fac.logdet() + n * LOG2PI)


@dataclass(frozen=True)
class OMLResult:
    lam: float
    log_marginal: float
    at_boundary: bool


def oml_lambda(
    gram: GramMatrix,
    y,
    sigma2,
    bounds: tuple[float, float] = (1e-4, 1e6),
    tol: float = 1e-4,
    n_scan: int = 41,
) -> OMLResult:
    """Kernel scale maximizing the Gaussian marginal likelihood.

    A coarse log-spaced scan brackets the maximizer, then golden-section
    search on ``log10(lam)`` refines it to ``tol``.  A maximizer within
    ``tol`` of either bound sets ``at_boundary`` and emits a warning.
    """
    lo, hi = math.log10(bounds[0]), math.log10(bounds[1])

    def objective(t):
        return log_marginal_gaussian(10.0**t, sigma2, gram, y)

    grid = np.linspace(lo, hi, n_scan)
    vals = np.array([objective(t) for t in grid])
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_scan - 1)]
    t_best, f_best = _golden_max(objective, a, b, tol)
    if vals[i] > f_best:
        t_best, f_best = grid[i], vals[i]
    at_boundary = t_best - lo < tol or hi - t_best < tol
    if at_boundary:
        warnings.warn(f"marginal likelihood maximized at boundary lambda={10.0**t_best:g}", RuntimeWarning)
    return OMLResult(10.0**t_best, f_best, at_boundary)


def _golden_max(f, a, b, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    # endpoints matter when the maximum is on the boundary of the bracket
    candidates = [(fc, c), (fd, d), (f(a), a), (f(b), b)]
    fbest, tbest = max(candidates)
    return tbest, fbest


@dataclass(frozen=True)
class ConditionalMaxReport:
    argmax_is_mean: bool
    covariance_invariant: bool
    max_cov_spread: float
    max_log_density: float
    degenerate: bool


def conditional_max_properties(j: JointGaussian, v_values, rtol: float = 1e-10) -> ConditionalMaxReport:
    """Check that ``max_u log p(u | v)`` is attained at the mean and is free of ``v``.

    The maximum is ``-log det(2 pi cov(u|v)) / 2``; a singular conditional
    covariance means a point mass and is reported as ``inf``.
    """
    v_values = [np.atleast_1d(np.asarray(v, dtype=float)) for v in v_values]
    if not v_values:
        raise InputError("need at least one v value")
    results = [condition(j, v) for v in v_values]
    cov0 = results[0][1]
    spread = max(float(np.max(np.abs(c - cov0))) for _, c in results)
    scale = max(1.0, float(np.max(np.abs(cov0))))
    invariant = spread <= rtol * scale

    eig = np.linalg.eigvalsh(cov0)
    degenerate = bool(eig[0] <= 1e-12 * max(1.0, float(eig[-1])))
    if degenerate:
        return ConditionalMaxReport(True, invariant, spread, math.inf, True)
    max_logp = -0.5 * float(np.sum(np.log(2.0 * math.pi * eig)))
    # the maximizer over u of the joint density, read off the joint precision
    prec = np.linalg.inv(j.joint_cov)
    nu = j.mean_u.size
    p_uu, p_uv = prec[:nu, :nu], prec[:nu, nu:]
    argmax_ok = True
    for v, (mean, _) in zip(v_values, results):
        u_star = j.mean_u - np.linalg.solve(p_uu, p_uv @ (v - j.mean_v))
        tol = 1e-8 * (1.0 + float(np.max(np.abs(mean))))
        if float(np.max(np.abs(u_star - mean))) > tol:
            argmax_ok = False
    return ConditionalMaxReport(argmax_ok, invariant, spread, max_logp, False)
