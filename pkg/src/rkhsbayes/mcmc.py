"""Random-walk Metropolis for Laplace-noise kernel regression.

Laplace noise with variance ``sigma^2`` is written as Gaussian noise whose
variances ``tau_i`` are exponential with mean ``sigma^2``.  Given ``tau`` and
the kernel scale ``lam`` the data are Gaussian with covariance
``C = lam K + diag(tau)``, so ``p(tau, lam | y)`` is available up to a
constant and can be explored jointly by a random walk.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError, NumericalError
from .kernel import GramMatrix, KernelSpec, cross, factor

LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ChainConfig:
    """Random-walk Metropolis settings.

    The default proposal scales are the ones tuned for the 64-point
    ``exp(sin 8x)`` benchmark with ``sigma^2 = 0.09``.  When ``adapt`` is
    set both scales are doubled or halved every ``adapt_every`` burn-in steps
    to keep acceptance inside ``target``; they are frozen after burn-in.
    A zero scale freezes that block at its starting value, which leaves the
    chain targeting the conditional of the other block.
    """

    length: int = 20_000
    burn_in: float = 0.2
    prop_lambda: float = 30.0
    prop_tau: float = 0.003
    seed: int = 0
    adapt: bool = True
    adapt_every: int = 500
    target: tuple[float, float] = (0.15, 0.4)
    lambda_moves: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise InputError("chain length must be positive")
        if not 0.0 <= self.burn_in < 1.0:
            raise InputError("burn-in fraction must lie in [0, 1)")
        if self.prop_lambda < 0 or self.prop_tau < 0 or not self.prop_lambda + self.prop_tau > 0:
            raise InputError("proposal scales must be nonnegative and not both zero")
        if self.lambda_moves < 0:
            raise InputError("lambda_moves must be nonnegative")

    @property
    def n_burn(self) -> int:
        return int(self.burn_in * self.length)


@dataclass(frozen=True)
class PosteriorChain:
    """Stored states of a chain, burn-in included.

    ``acceptance`` is measured after burn-in, when the proposal is fixed.
    """

    lambdas: np.ndarray
    taus: np.ndarray
    log_posts: np.ndarray
    n_burn: int
    acceptance: float
    ess: float
    prop_lambda: float
    prop_tau: float
    seed: int = 0

    @property
    def kept_lambdas(self) -> np.ndarray:
        return self.lambdas[self.n_burn :]

    @property
    def kept_taus(self) -> np.ndarray:
        return self.taus[self.n_burn :]

    @property
    def all_rejected(self) -> bool:
        return self.acceptance == 0.0


def _as_matrix(gram):
    return np.asarray(gram.entries if isinstance(gram, GramMatrix) else gram, dtype=float)


def _log_gauss(k, lam, tau, y):
    c = lam * k
    c[np.diag_indices_from(c)] += tau
    try:
        low = np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "C(tau, lambda) is not positive definite",
            {"lambda": float(lam), "min_tau": float(np.min(tau))},
        ) from None
    z = solve_triangular(low, y, lower=True, check_finite=False)
    return -0.5 * (float(z @ z) + 2.0 * float(np.sum(np.log(np.diag(low)))) + y.size * LOG2PI)


def log_post(tau, lam, gram, y, sigma2) -> float:
    """Unnormalized ``log p(tau, lam | y)`` with a flat prior on ``lam >= 0``.

    Returns ``-inf`` outside the support (``lam < 0`` or any ``tau_i <= 0``).
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    k = _as_matrix(gram)
    if tau.shape != y.shape or k.shape != (y.size, y.size):
        raise InputError("tau, y and the Gram matrix have inconsistent sizes")
    if lam < 0 or np.any(tau <= 0):
        return -math.inf
    return _log_gauss(k, lam, tau, y) - float(np.sum(tau)) / sigma2


def initial_state(gram, y, sigma2: float, iterations: int = 10):
    """Starting ``(lam, tau)`` near the bulk of the posterior.

    Alternates the marginal likelihood maximizer in ``lam`` for noise
    variances ``tau`` with ``tau_i = E[tau_i | e_i]``, the mean of the mixing
    variance given a residual, ``|e| sigma / sqrt(2) + sigma^2 / 2``.
    Residuals are leave-one-out, so an outlier keeps a large residual even
    when the fit interpolates it.  The first pass is the quadratic-loss
    maximizer with ``tau_i = sigma2``.
    """
    from .gauss import oml_lambda

    k = _as_matrix(gram)
    y = np.asarray(y, dtype=float)
    sigma = math.sqrt(sigma2)
    tau = np.full(y.size, float(sigma2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(iterations):
            lam = oml_lambda(k, y, tau).lam
            c = lam * k
            c[np.diag_indices_from(c)] += tau
            fac = factor(c)
            cinv_diag = np.diag(fac.solve(np.eye(y.size)))
            loo = fac.solve(y) / cinv_diag
            tau = np.abs(loo) * sigma / math.sqrt(2.0) + sigma2 / 2.0
    return lam, tau


def run_chain(
    config: ChainConfig,
    gram,
    y,
    sigma2: float,
    lam0: float | None = None,
    tau0=None,
) -> PosteriorChain:
    """Random-walk Metropolis on ``(lam, tau)`` with independent normal steps.

    Every iteration proposes ``lam + s_lam z_0`` and ``tau_i + s_tau z_i``
    together and accepts with the Metropolis ratio.  With
    ``config.lambda_moves > 0`` each iteration is followed by that many
    ``lam``-only random-walk moves (same target, lambda step size).  The
    start defaults to :func:`initial_state`.
    """
    k = _as_matrix(gram)
    y = np.asarray(y, dtype=float)
    n = y.size
    if lam0 is None or tau0 is None:
        lam_init, tau_init = initial_state(k, y, sigma2)
        lam0 = lam_init if lam0 is None else lam0
        tau0 = tau_init if tau0 is None else tau0
    tau = np.array(tau0, dtype=float).reshape(n)
    lam = float(lam0)
    rng = np.random.default_rng(config.seed)
    lp = log_post(tau, lam, k, y, sigma2)
    if not np.isfinite(lp):
        raise InputError("initial state has zero posterior density")

    length = config.length
    n_burn = config.n_burn
    lambdas = np.empty(length)
    taus = np.empty((length, n))
    log_posts = np.empty(length)
    s_lam, s_tau = config.prop_lambda, config.prop_tau
    window_acc = 0
    kept_acc = 0
    for it in range(length):
        z = rng.standard_normal(n + 1)
        lam_new = lam + s_lam * z[0]
        tau_new = tau + s_tau * z[1:]
        u = rng.random()
        if lam_new >= 0 and np.all(tau_new > 0):
            lp_new = _log_gauss(k, lam_new, tau_new, y) - float(np.sum(tau_new)) / sigma2
            if math.log(u) < lp_new - lp:
                lam, tau, lp = lam_new, tau_new, lp_new
                window_acc += 1
                if it >= n_burn:
                    kept_acc += 1
        for _ in range(config.lambda_moves):
            lam_new = lam + s_lam * rng.standard_normal()
            u = rng.random()
            if lam_new >= 0:
                lp_new = _log_gauss(k, lam_new, tau, y) - float(np.sum(tau)) / sigma2
                if math.log(u) < lp_new - lp:
                    lam, lp = lam_new, lp_new
        lambdas[it] = lam
        taus[it] = tau
        log_posts[it] = lp
        if config.adapt and it < n_burn and (it + 1) % config.adapt_every == 0:
            rate = window_acc / config.adapt_every
            if rate < config.target[0]:
                s_lam, s_tau = s_lam / 2.0, s_tau / 2.0
            elif rate > config.target[1]:
                s_lam, s_tau = s_lam * 2.0, s_tau * 2.0
            window_acc = 0
    n_kept = length - n_burn
    acceptance = kept_acc / n_kept if n_kept else 0.0
    ess = effective_sample_size(lambdas[n_burn:])
    return PosteriorChain(lambdas, taus, log_posts, n_burn, acceptance, ess, s_lam, s_tau, config.seed)


def effective_sample_size(x) -> float:
    """``n / (1 + 2 sum rho_k)`` with the sum stopped before the first negative autocorrelation."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return float(n)
    d = x - x.mean()
    var = float(d @ d) / n
    if var == 0.0:
        return float(n)
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(d, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[:n] / n
    rho = acov / acov[0]
    total = 0.0
    for r in rho[1:]:
        if r < 0:
            break
        total += r
    return float(n / (1.0 + 2.0 * total))


@dataclass(frozen=True)
class LambdaSummary:
    mean: float
    median: float
    ci: tuple[float, float]


def posterior_lambda(chain: PosteriorChain) -> LambdaSummary:
    """Posterior mean, median and central 95% interval of ``lam`` after burn-in."""
    kept = chain.kept_lambdas
    if kept.size == 0:
        raise InputError("no samples left after burn-in")
    lo, med, hi = np.quantile(kept, [0.025, 0.5, 0.975])
    return LambdaSummary(float(kept.mean()), float(med), (float(lo), float(hi)))


@dataclass(frozen=True)
class MinVarianceResult:
    gbar: np.ndarray
    skipped: int
    used: int


def min_variance_g(chain: PosteriorChain, gram, y, max_skip_fraction: float = 0.01) -> MinVarianceResult:
    """Monte Carlo estimate of ``E(g | y) = K mean_l[lam_l C_l^{-1} y]``.

    Repeated states (rejections) are solved once and weighted by their run
    length.  Samples whose ``C`` cannot be factorized are skipped.

    Raises
    ------
    NumericalError
        If more than ``max_skip_fraction`` of the samples are skipped.
    """
    k = _as_matrix(gram)
    y = np.asarray(y, dtype=float)
    lambdas = chain.kept_lambdas
    taus = chain.kept_taus
    total = lambdas.size
    if total == 0:
        raise InputError("no samples left after burn-in")
    acc = np.zeros(y.size)
    skipped = 0
    i = 0
    while i < total:
        j = i + 1
        while j < total and lambdas[j] == lambdas[i] and np.array_equal(taus[j], taus[i]):
            j += 1
        c = lambdas[i] * k
        c[np.diag_indices_from(c)] += taus[i]
        try:
            low = np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            skipped += j - i
        else:
            w = solve_triangular(low.T, solve_triangular(low, y, lower=True), lower=False)
            acc += (j - i) * lambdas[i] * w
        i = j
    used = total - skipped
    if skipped > max_skip_fraction * total or used == 0:
        raise NumericalError("too many samples failed to factorize", {"skipped": skipped, "total": total})
    return MinVarianceResult(k @ (acc / used), skipped, used)


def min_variance_function(gbar, gram, spec: KernelSpec, training, x):
    """``E[F(x) | y] = k(x)^T K^{-1} gbar``."""
    d = factor(gram).solve(np.asarray(gbar, dtype=float))
    scalar = np.ndim(x) == 0
    out = cross(spec, x, training) @ d
    return float(out[0]) if scalar else out
