"""Representer-theorem estimates for quadratic and general convex losses.

The estimate is ``F(x) = sum_i c_i K(x_i, x)`` where ``c`` minimizes

    sum_i V_i(y_i - (K c)_i) + gamma * c^T K c.

Quadratic losses have the closed form ``c = (K + gamma I)^{-1} y``.  Other
losses are handled by smoothing their kinks with width ``mu``, running a
damped Newton method on ``c`` and shrinking ``mu`` geometrically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InputError, NumericalError
from .kernel import GramMatrix, KernelSpec, cross, factor
from .loss import LossSpec, smoothed, value

ARMIJO = 1e-4
MU0 = 1.0
MU_SHRINK = 4.0
MU_MIN = 1e-8
MAX_INNER = 200
MAX_STAGES = 15
REL_DECREASE_TOL = 1e-10
GRAD_TOL = 1e-9
MAX_STALL = 10


@dataclass(frozen=True)
class SolverDiagnostics:
    iterations: int = 0
    stages: int = 0
    objective: float = float("nan")
    gradient_norm: float = 0.0
    residual: float = 0.0
    final_mu: float = 0.0
    jitter: float = 0.0
    # (mu, smoothed objective) after every accepted Newton step
    trace: tuple = ()


@dataclass(frozen=True)
class RepresenterEstimate:
    coefficients: np.ndarray
    locations: np.ndarray
    kernel: KernelSpec
    gamma: float
    diagnostics: SolverDiagnostics = field(default_factory=SolverDiagnostics)

    def __call__(self, x):
        return evaluate(self, x)


def _as_matrix(gram) -> np.ndarray:
    return np.asarray(gram.entries if isinstance(gram, GramMatrix) else gram, dtype=float)


def _check(gram, y, gamma):
    k = _as_matrix(gram)
    y = np.asarray(y, dtype=float)
    if y.shape != (k.shape[0],):
        raise InputError(f"y has shape {y.shape}, Gram is {k.shape}")
    if not gamma > 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    return k, y


def solve_quadratic(gram: GramMatrix, y, gamma: float) -> RepresenterEstimate:
    """Closed-form coefficients ``(K + gamma I)^{-1} y``."""
    k, y = _check(gram, y, gamma)
    fac = factor(k + gamma * np.eye(k.shape[0]))
    c = fac.solve(y)
    res = np.linalg.norm(k @ c + gamma * c - y) / max(np.linalg.norm(y), 1e-300)
    obj = float(np.sum((y - k @ c) ** 2) + gamma * c @ k @ c)
    diag = SolverDiagnostics(iterations=1, stages=1, objective=obj, residual=float(res), jitter=fac.jitter)
    return _estimate(gram, c, gamma, diag)


def _estimate(gram, c, gamma, diag):
    if isinstance(gram, GramMatrix):
        return RepresenterEstimate(c, gram.locations, gram.kernel, gamma, diag)
    return RepresenterEstimate(c, np.arange(len(c), dtype=float), KernelSpec(), gamma, diag)


def _broadcast_losses(losses, n) -> list[LossSpec]:
    if isinstance(losses, LossSpec):
        return [losses] * n
    losses = list(losses)
    if len(losses) != n:
        raise InputError(f"need {n} losses, got {len(losses)}")
    return losses


def _loss_terms(losses, r, mu):
    """Smoothed values, slopes and curvatures of every V_i at ``r``."""
    v = np.empty_like(r)
    g = np.empty_like(r)
    h = np.empty_like(r)
    for spec in set(losses):
        idx = np.fromiter((s == spec for s in losses), bool, len(losses))
        v[idx], g[idx], h[idx] = smoothed(spec, r[idx], mu)
    return v, g, h


def objective(c, gram, y, losses, gamma) -> float:
    """Exact (unsmoothed) coefficient objective."""
    k = _as_matrix(gram)
    c = np.asarray(c, dtype=float)
    losses = _broadcast_losses(losses, len(y))
    r = np.asarray(y, dtype=float) - k @ c
    total = 0.0
    for spec in set(losses):
        idx = np.fromiter((s == spec for s in losses), bool, len(losses))
        total += float(np.sum(value(spec, r[idx])))
    return total + gamma * float(c @ k @ c)


def smoothed_objective(c, gram, y, losses, gamma, mu):
    """Smoothed objective value and its gradient with respect to ``c``."""
    k = _as_matrix(gram)
    c = np.asarray(c, dtype=float)
    losses = _broadcast_losses(losses, len(y))
    kc = k @ c
    v, g, _ = _loss_terms(losses, np.asarray(y, dtype=float) - kc, mu)
    return float(np.sum(v) + gamma * c @ kc), k @ (2.0 * gamma * c - g)


def _newton_step(k, b, h, gamma):
    """Solve ``(diag(h) K + 2 gamma I) d = b`` for the Newton direction in ``c``.

    Rows with zero curvature give ``d = b / (2 gamma)`` directly.  The rest
    are divided by their curvature, leaving the symmetric positive definite
    system ``(K_ww + 2 gamma / h_w) d_w = b_w / h_w - K_wo d_o``.  Nothing is
    subtracted and divided by ``gamma`` afterwards, so the step stays
    accurate when ``1/mu`` curvatures dwarf ``gamma``.
    """
    w = h > 0
    step = np.empty_like(b)
    o = ~w
    step[o] = b[o] / (2.0 * gamma)
    if not w.any():
        return step, 0.0
    m = k[np.ix_(w, w)] + np.diag(2.0 * gamma / h[w])
    rhs = b[w] / h[w] - k[np.ix_(w, o)] @ step[o]
    fac = factor(m, pivot_rtol=0.0)
    step[w] = fac.solve(rhs)
    return step, fac.jitter


def solve_general(gram: GramMatrix, y, losses, gamma: float, c0=None) -> RepresenterEstimate:
    """Minimize the coefficient objective for arbitrary convex losses.

    ``losses`` is one :class:`LossSpec` for every measurement or a list of
    them.  Each smoothed subproblem is solved by Newton's method with Armijo
    backtracking (see :func:`_newton_step` for the linear algebra).

    Raises
    ------
    ConvergenceError
        If a smoothed subproblem needs more than 200 Newton steps.
    """
    k, y = _check(gram, y, gamma)
    n = y.size
    losses = _broadcast_losses(losses, n)
    smooth = all(s.smooth for s in losses)
    c = np.zeros(n) if c0 is None else np.array(c0, dtype=float)
    eye = np.eye(n)

    mu = MU0
    total_iters = 0
    stage = 0
    max_jitter = 0.0
    trace = []
    while True:
        stage += 1
        phi, grad = smoothed_objective(c, k, y, losses, gamma, mu)
        trace.append((mu, phi))
        stalled = 0
        for inner in range(MAX_INNER + 1):
            gnorm = float(np.linalg.norm(grad))
            if gnorm < GRAD_TOL * (1.0 + abs(phi)):
                break
            if inner == MAX_INNER:
                raise ConvergenceError(
                    f"Newton did not converge in {MAX_INNER} steps at mu={mu:g}",
                    last_iterate=c,
                    residual=gnorm,
                )
            r = y - k @ c
            _, gl, hl = _loss_terms(losses, r, mu)
            b = gl - 2.0 * gamma * c
            step, jit = _newton_step(k, b, hl, gamma)
            max_jitter = max(max_jitter, jit)
            slope = float(grad @ step)
            if not slope < 0:
                break
            t = 1.0
            for _ in range(60):
                c_new = c + t * step
                phi_new, grad_new = smoothed_objective(c_new, k, y, losses, gamma, mu)
                if phi_new <= phi + ARMIJO * t * slope:
                    break
                t *= 0.5
            else:
                break
            total_iters += 1
            decrease = phi - phi_new
            c, phi, grad = c_new, phi_new, grad_new
            trace.append((mu, phi))
            # a tiny decrease after a damped step with a large Newton decrement
            # means the kink has not been resolved yet, so keep going; a long
            # run of them means the gradient is roundoff and phi has settled
            floor = REL_DECREASE_TOL * max(abs(phi), 1e-300)
            stalled = stalled + 1 if decrease < floor else 0
            if decrease < floor and (t == 1.0 or -slope < floor or stalled >= MAX_STALL):
                break
        if smooth or mu <= MU_MIN:
            break
        if stage >= MAX_STAGES:
            raise ConvergenceError("smoothing schedule exhausted", last_iterate=c, residual=gnorm)
        mu /= MU_SHRINK

    phi, grad = smoothed_objective(c, k, y, losses, gamma, mu)
    diag = SolverDiagnostics(
        iterations=total_iters,
        stages=stage,
        objective=objective(c, k, y, losses, gamma),
        gradient_norm=float(np.linalg.norm(grad)),
        residual=float(np.linalg.norm(grad)) / (1.0 + abs(phi)),
        final_mu=0.0 if smooth else mu,
        jitter=max_jitter,
        trace=tuple(trace),
    )
    return _estimate(gram, c, gamma, diag)


def evaluate(est: RepresenterEstimate, x):
    """``sum_i c_i K(x_i, x)``; scalar in, scalar out."""
    scalar = np.ndim(x) == 0
    out = cross(est.kernel, x, est.locations) @ est.coefficients
    return float(out[0]) if scalar else out


def map_at_locations(est: RepresenterEstimate, extra=(), tol: float = 1e-8) -> np.ndarray:
    """MAP estimate of the field at the training locations followed by ``extra``.

    The values at ``extra`` are also rebuilt by Gaussian conditioning,
    ``K_hg K^{-1} g_hat`` with ``g_hat = K c``, and compared with direct
    evaluation.  The check is skipped when the training Gram is singular.

    Raises
    ------
    NumericalError
        If the two constructions disagree by more than ``tol``.
    """
    extra = np.atleast_1d(np.asarray(extra, dtype=float))
    g_hat = evaluate(est, est.locations)
    if extra.size == 0:
        return np.asarray(g_hat, dtype=float)
    h_eval = evaluate(est, extra)
    kbar = cross(est.kernel, est.locations, est.locations)
    fac = factor(kbar)
    if fac.jitter == 0.0:
        h_cond = cross(est.kernel, extra, est.locations) @ fac.solve(g_hat)
        gap = float(np.max(np.abs(h_cond - h_eval)))
        if gap > tol * (1.0 + float(np.max(np.abs(h_eval)))):
            raise NumericalError(
                "conditioning and representer evaluation disagree",
                {"gap": gap, "tol": tol},
            )
    return np.concatenate([g_hat, h_eval])
