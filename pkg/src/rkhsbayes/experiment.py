"""Monte Carlo comparison of quadratic and Laplace noise models.

``exp(sin 8x)`` is sampled at 64 equispaced points of ``[0, 1]`` with
Gaussian noise (variance 0.09 by default) and, optionally, ``+/-3`` outliers
hitting each measurement with probability 0.1.  Two estimators are compared:

``l2-oml``
    quadratic loss, kernel scale from the Gaussian marginal likelihood.
``l1-bayes``
    Laplace-calibrated absolute loss, kernel scale from the posterior mean
    of the Metropolis chain, then the MAP fit (or, with ``estimator="minvar"``,
    the Monte Carlo posterior mean).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ExperimentError, InputError, RKHSBayesError
from .gauss import oml_lambda
from .kernel import KernelSpec, gram
from .loss import calibrated_absolute
from .mcmc import ChainConfig, min_variance_function, min_variance_g, posterior_lambda, run_chain
from .solver import evaluate, solve_general, solve_quadratic

log = logging.getLogger(__name__)

METHODS = ("l2-oml", "l1-bayes")


def true_function(x):
    return np.exp(np.sin(8.0 * np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ExperimentConfig:
    runs: int = 30
    noise_variance: float = 0.09
    outliers: bool = False
    outlier_prob: float = 0.1
    outlier_magnitude: float = 3.0
    grid_size: int = 64
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    chain: ChainConfig = field(default_factory=ChainConfig)
    sigma2_override: float | None = None
    estimator: str = "map"
    jobs: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise InputError("runs must be at least 1")
        if not 0.0 <= self.outlier_prob <= 1.0:
            raise InputError("outlier probability must lie in [0, 1]")
        if self.noise_variance < 0 or self.grid_size < 2:
            raise InputError("noise variance must be nonnegative and grid size at least 2")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise InputError(f"unknown methods {bad}; choose from {METHODS}")
        if self.estimator not in ("map", "minvar"):
            raise InputError("estimator must be 'map' or 'minvar'")
        if self.sigma2_override is not None and not self.sigma2_override > 0:
            raise InputError("sigma2 override must be positive")

    @property
    def sigma2(self) -> float:
        """Noise variance handed to the estimators."""
        return self.noise_variance if self.sigma2_override is None else self.sigma2_override


def _streams(seed: int, run_index: int):
    ss = np.random.SeedSequence(seed, spawn_key=(run_index,))
    data_ss, chain_ss = ss.spawn(2)
    chain_seed = int(chain_ss.generate_state(1, np.uint64)[0])
    return np.random.default_rng(data_ss), chain_seed


def locations(n: int = 64) -> np.ndarray:
    return np.arange(n) / (n - 1.0)


def generate(config: ExperimentConfig, run_index: int) -> Dataset:
    """Synthetic measurements for one run, reproducible from ``(seed, run_index)``."""
    if not 0 <= run_index < config.runs:
        raise InputError(f"run index {run_index} outside [0, {config.runs})")
    rng, _ = _streams(config.seed, run_index)
    x = locations(config.grid_size)
    noise = math.sqrt(config.noise_variance) * rng.standard_normal(x.size)
    y = true_function(x) + noise
    if config.outliers:
        hit = rng.random(x.size) < config.outlier_prob
        sign = np.where(rng.random(x.size) < 0.5, -1.0, 1.0)
        y = y + hit * sign * config.outlier_magnitude
    return Dataset(x, y)


def relative_error(truth, estimate) -> float:
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape:
        raise InputError("truth and estimate differ in length")
    denom = float(np.sum(truth * truth))
    if denom == 0.0:
        raise InputError("relative error undefined for an all-zero truth")
    return math.sqrt(float(np.sum((truth - estimate) ** 2)) / denom)


@dataclass(frozen=True)
class RunRecord:
    run: int
    method: str
    rel_error: float
    lam: float = float("nan")
    gamma: float = float("nan")
    at_boundary: bool = False
    acceptance: float | None = None
    ess: float | None = None


@dataclass
class RunReport:
    records: list[RunRecord]
    failures: list[dict] = field(default_factory=list)
    seeds: dict = field(default_factory=dict)

    def errors(self, method: str) -> np.ndarray:
        return np.array([r.rel_error for r in self.records if r.method == method])

    def summary(self) -> dict:
        out = {}
        for method in dict.fromkeys(r.method for r in self.records):
            errs = np.sort(self.errors(method))
            q1, med, q3 = np.quantile(errs, [0.25, 0.5, 0.75])
            entry = {
                "n": int(errs.size),
                "mean": float(errs.mean()),
                "median": float(med),
                "q1": float(q1),
                "q3": float(q3),
                "min": float(errs[0]),
                "max": float(errs[-1]),
            }
            recs = [r for r in self.records if r.method == method and r.acceptance is not None]
            if recs:
                entry["min_acceptance"] = min(r.acceptance for r in recs)
                entry["min_ess"] = min(r.ess for r in recs)
                entry["median_ess"] = float(np.median([r.ess for r in recs]))
            out[method] = entry
        return out


def _fit_l2(data, g, sigma2):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        oml = oml_lambda(g, data.y, sigma2)
    gamma = sigma2 / oml.lam
    fhat = evaluate(solve_quadratic(g, data.y, gamma), data.x)
    return fhat, {"lam": oml.lam, "gamma": gamma, "at_boundary": bool(oml.at_boundary)}


def _fit_l1(data, g, sigma2, chain_config, estimator):
    chain = run_chain(chain_config, g, data.y, sigma2)
    lam = posterior_lambda(chain).mean
    gamma = sigma2 / lam
    if estimator == "map":
        est = solve_general(g, data.y, calibrated_absolute(math.sqrt(sigma2)), gamma)
        fhat = evaluate(est, data.x)
    else:
        gbar = min_variance_g(chain, g, data.y).gbar
        fhat = min_variance_function(gbar, g, g.kernel, data.x, data.x)
    diag = {"lam": lam, "gamma": gamma, "acceptance": chain.acceptance, "ess": chain.ess}
    return fhat, diag


def run_one(config: ExperimentConfig, run_index: int):
    """All requested methods on one synthetic dataset.

    Returns ``(records, failures)``; a method that raises is recorded as a
    failure rather than aborting the run.
    """
    data = generate(config, run_index)
    _, chain_seed = _streams(config.seed, run_index)
    g = gram(KernelSpec("cubic-spline-shifted"), data.x)
    truth = true_function(data.x)
    records, failures = [], []
    for method in config.methods:
        try:
            if method == "l2-oml":
                fhat, diag = _fit_l2(data, g, config.sigma2)
            else:
                chain_cfg = replace(config.chain, seed=chain_seed)
                fhat, diag = _fit_l1(data, g, config.sigma2, chain_cfg, config.estimator)
        except RKHSBayesError as exc:
            failures.append({"run": run_index, "method": method, "error": type(exc).__name__, "message": str(exc)})
            continue
        records.append(RunRecord(run_index, method, relative_error(truth, fhat), **diag))
    return records, failures


def run(config: ExperimentConfig) -> RunReport:
    """Execute every run; errors are aggregated per method.

    Raises
    ------
    ExperimentError
        If more than 10% of the (run, method) fits fail.
    """
    indices = range(config.runs)
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            results = list(pool.map(run_one, [config] * config.runs, indices))
    else:
        results = []
        for i in indices:
            results.append(run_one(config, i))
            log.info("run %d/%d done", i + 1, config.runs)
    records = [r for recs, _ in results for r in recs]
    failures = [f for _, fails in results for f in fails]
    records.sort(key=lambda r: (r.run, config.methods.index(r.method)))
    total = config.runs * len(config.methods)
    if len(failures) > 0.1 * total:
        raise ExperimentError(f"{len(failures)} of {total} fits failed: {failures[:3]}")
    seeds = {"master": config.seed, "chain": {i: _streams(config.seed, i)[1] for i in indices}}
    return RunReport(records, failures, seeds)


def export(report: RunReport, path, summary_path=None) -> None:
    """Write ``run,method,rel_error`` rows and a JSON summary beside them.

    The summary goes to ``summary_path`` or ``path`` with a ``.json`` suffix.
    """
    if not report.records:
        raise InputError("nothing to export")
    path = Path(path)
    summary_path = path.with_suffix(".json") if summary_path is None else Path(summary_path)
    try:
        with path.open("w", newline="") as fh:
            fh.write("run,method,rel_error\n")
            for r in report.records:
                fh.write(f"{r.run},{r.method},{r.rel_error!r}\n")
        payload = {
            "summary": report.summary(),
            "failures": report.failures,
            "seeds": report.seeds,
            "runs": [asdict(r) for r in report.records],
        }
        summary_path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
    except OSError as exc:
        raise InputError(f"cannot write {exc.filename}: {exc.strerror}") from None


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def load_csv(path) -> RunReport:
    """Read back the rows written by :func:`export`."""
    records = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["run", "method", "rel_error"]:
            raise InputError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            records.append(RunRecord(int(row["run"]), row["method"], float(row["rel_error"])))
    return RunReport(records)
