"""Brute-force and quadrature oracles.

None of these reuse the code paths they are meant to check: quadrature is a
plain adaptive Simpson rule, grid search is exhaustive, and the Monte Carlo
conditional mean is a least-squares regression on joint draws.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import AccuracyError, InputError


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration interval (endpoints may be infinite) and accuracy target."""

    a: float
    b: float
    atol: float = 1e-10
    max_subdivisions: int = 200_000

    def __post_init__(self):
        if not self.atol > 0:
            raise InputError("quadrature tolerance must be positive")
        if not self.a < self.b:
            raise InputError("quadrature interval must have a < b")


def _mapped(f, a, b):
    """Rewrite an integral over a (half-)infinite interval onto ``[0, 1)``.

    Uses ``x = c +/- t / (1 - t)``, which turns exponentially decaying tails
    into integrands that vanish smoothly at ``t = 1``.
    """
    a_inf, b_inf = math.isinf(a), math.isinf(b)
    if not a_inf and not b_inf:
        return [(f, a, b)]

    def half(c, sign):
        def g(t):
            if t >= 1.0:
                return 0.0
            w = 1.0 - t
            val = f(c + sign * t / w) / (w * w)
            return val if math.isfinite(val) else 0.0

        return g

    if a_inf and b_inf:
        return [(half(0.0, 1.0), 0.0, 1.0), (half(0.0, -1.0), 0.0, 1.0)]
    if b_inf:
        return [(half(a, 1.0), 0.0, 1.0)]
    return [(half(b, -1.0), 0.0, 1.0)]


def integrate(f, spec: QuadratureSpec, panels: int = 16) -> float:
    """Adaptive Simpson quadrature of a scalar function.

    Each piece starts from ``panels`` equal subintervals so that a single
    coarse Simpson estimate cannot be fooled by symmetric integrands.

    Raises
    ------
    AccuracyError
        When the subdivision budget runs out; ``best_estimate`` holds the
        running sum.
    """
    pieces = _mapped(f, spec.a, spec.b)
    tol = spec.atol / (len(pieces) * panels)
    panel_list = []
    for g, a, b in pieces:
        edges = np.linspace(a, b, panels + 1)
        panel_list.extend((g, float(lo), float(hi)) for lo, hi in zip(edges[:-1], edges[1:]))
    total = 0.0
    budget = spec.max_subdivisions
    for i, (g, lo, hi) in enumerate(panel_list):
        try:
            val, used = _simpson(g, lo, hi, tol, budget)
        except AccuracyError as exc:
            rest = sum(_coarse(*p) for p in panel_list[i + 1 :])
            raise AccuracyError(str(exc), best_estimate=total + exc.best_estimate + rest) from None
        total += val
        budget -= used
    return total


def _coarse(f, a, b):
    return (b - a) * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b)) / 6.0


def _simpson(f, a, b, tol, budget):
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    used = 0
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
        right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol or depth >= 60:
            total += left + right + delta / 15.0
            continue
        used += 1
        if used > budget:
            rest = sum(item[5] for item in stack) + left + right
            raise AccuracyError("quadrature subdivision cap exceeded", best_estimate=total + rest)
        stack.append((a, m, fa, flm, fm, left, tol / 2.0, depth + 1))
        stack.append((m, b, fm, frm, fb, right, tol / 2.0, depth + 1))
    return total, used


def mixture_marginal(e: float, sigma: float, atol: float = 1e-12) -> float:
    """``int_0^inf mixture_integrand(e, tau, sigma) dtau`` by quadrature.

    Substitutes ``tau = u^2`` to remove the ``tau^(-1/2)`` endpoint
    singularity at ``e = 0``.
    """
    from .loss import mixture_integrand

    def g(u):
        u = max(u, 1e-150)
        return 2.0 * u * mixture_integrand(e, u * u, sigma)

    return integrate(g, QuadratureSpec(0.0, math.inf, atol))


@dataclass(frozen=True)
class ExampleReport:
    f_hat: float
    normalizer: float
    E_f_given_y: float
    difference: float
    rhs: float
    identity_residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def example_check(atol: float = 1e-13) -> ExampleReport:
    """Single-measurement absolute-loss example: MAP versus posterior mean.

    With ``K = 1``, ``gamma = 1`` and ``y = 1`` the MAP estimate is ``1/2``
    while the posterior under ``exp(-f^2 - |1 - f|)`` has a smaller mean.  The
    difference is computed twice: directly, and through the closed integral
    ``exp(-3/4)/A * int_{1/2}^inf s (exp(1 - 2s) - 1) exp(-s^2) ds``.

    Raises
    ------
    AccuracyError
        If the two routes disagree by more than ``1e-8`` or the sign is wrong.
    """
    from .loss import LossSpec
    from .solver import solve_general

    f_hat = float(solve_general(np.array([[1.0]]), np.array([1.0]), LossSpec("absolute"), 1.0).coefficients[0])

    def density(f):
        return math.exp(-f * f - abs(1.0 - f))

    # split at the kink so Simpson sees smooth pieces
    lower = QuadratureSpec(-math.inf, 1.0, atol)
    upper = QuadratureSpec(1.0, math.inf, atol)
    norm = integrate(density, lower) + integrate(density, upper)
    first = integrate(lambda f: f * density(f), lower) + integrate(lambda f: f * density(f), upper)
    mean = first / norm
    lhs = mean - f_hat

    tail = integrate(
        lambda s: s * (math.exp(1.0 - 2.0 * s) - 1.0) * math.exp(-s * s),
        QuadratureSpec(0.5, math.inf, atol),
    )
    rhs = math.exp(-0.75) / norm * tail
    report = ExampleReport(f_hat, norm, mean, lhs, rhs, abs(lhs - rhs))
    if report.identity_residual > 1e-8 or not lhs < 0:
        raise AccuracyError("example identity check failed", best_estimate=report)
    return report


def grid_argmax(f, box, points_per_dim: int):
    """Exhaustive maximization of ``f`` over a regular grid.

    ``f`` receives an ``(m, d)`` array of points and returns ``m`` values.
    ``box`` is a sequence of ``(lo, hi)`` pairs, one per dimension.
    """
    box = [tuple(map(float, b)) for b in box]
    d = len(box)
    if not 1 <= d <= 3:
        raise InputError("grid_argmax supports 1 to 3 dimensions")
    if not 2 <= points_per_dim <= 101:
        raise InputError("points_per_dim must lie in [2, 101]")
    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    vals = np.asarray(f(pts), dtype=float)
    i = int(np.argmax(vals))
    return pts[i], float(vals[i])


def mc_conditional_mean(j, v_value, draws: int = 1_000_000, seed: int = 0):
    """Estimate ``E(u | v = v_value)`` from joint draws by linear regression.

    Returns the estimate and its standard error (componentwise).  The
    regression is exact for Gaussians, where the conditional mean is affine.

    Raises
    ------
    AccuracyError
        If fewer than 10**4 draws are requested.
    """
    if draws < 10_000:
        raise AccuracyError(f"need at least 10000 draws, got {draws}")
    mean = np.concatenate([np.atleast_1d(j.mean_u), np.atleast_1d(j.mean_v)]).astype(float)
    cov = np.block([[j.cov_uu, j.cov_uv], [np.asarray(j.cov_uv).T, j.cov_vv]])
    nu = np.atleast_1d(j.mean_u).size
    rng = np.random.default_rng(seed)
    z = rng.multivariate_normal(mean, cov, size=draws, method="eigh")
    u, v = z[:, :nu], z[:, nu:]
    design = np.column_stack([np.ones(draws), v])
    coef, *_ = np.linalg.lstsq(design, u, rcond=None)
    x0 = np.concatenate([[1.0], np.atleast_1d(np.asarray(v_value, dtype=float))])
    estimate = x0 @ coef
    resid = u - design @ coef
    dof = max(draws - design.shape[1], 1)
    s2 = np.sum(resid * resid, axis=0) / dof
    gram_inv = np.linalg.pinv(design.T @ design)
    stderr = np.sqrt(s2 * float(x0 @ gram_inv @ x0))
    return estimate, stderr
