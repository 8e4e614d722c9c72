"""Positive definite kernels, Gram matrices and jittered Cholesky factors.

Locations are 1-D reals for every shipped kernel.  Solvers only ever see
locations through :meth:`KernelSpec.eval`, so a kernel on another domain can
be added here without touching them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .errors import InputError, NumericalError

KINDS = ("cubic-spline-shifted", "gaussian-rbf", "linear")

# relative jitter rungs, multiplied by trace/N
JITTER_LADDER = (0.0, 1e-10, 1e-8)


@dataclass(frozen=True)
class KernelSpec:
    """A positive definite kernel ``K(a, b)``.

    Parameters
    ----------
    kind : str
        One of ``cubic-spline-shifted``, ``gaussian-rbf`` or ``linear``.
    width : float, optional
        Length scale of the Gaussian RBF kernel.  Ignored otherwise.
    """

    kind: str = "cubic-spline-shifted"
    width: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian-rbf" and not self.width > 0:
            raise InputError(f"rbf width must be positive, got {self.width}")

    def eval(self, a, b):
        """Evaluate the kernel, broadcasting ``a`` against ``b``."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.kind == "cubic-spline-shifted":
            _check_unit_interval(a)
            _check_unit_interval(b)
            s = a + 1.0
            t = b + 1.0
            m = np.minimum(s, t)
            out = s * t * m / 2.0 - m**3 / 6.0
        elif self.kind == "gaussian-rbf":
            out = np.exp(-((a - b) ** 2) / (2.0 * self.width**2))
        else:
            out = a * b
        return float(out) if out.ndim == 0 else out

    def __str__(self):
        if self.kind == "gaussian-rbf":
            return f"rbf:{self.width:g}"
        return self.kind


def _check_unit_interval(x):
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise InputError("cubic-spline-shifted kernel is defined on [0, 1] only")


def parse_kernel(text: str) -> KernelSpec:
    """Parse the CLI form ``cubic-spline-shifted``, ``rbf:<width>`` or ``linear``."""
    text = text.strip()
    if text in ("cubic-spline-shifted", "spline"):
        return KernelSpec("cubic-spline-shifted")
    if text == "linear":
        return KernelSpec("linear")
    if text.startswith("rbf:"):
        try:
            width = float(text[4:])
        except ValueError:
            raise InputError(f"malformed rbf width in {text!r}") from None
        return KernelSpec("gaussian-rbf", width)
    raise InputError(f"unknown kernel {text!r}")


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    locations: np.ndarray
    kernel: KernelSpec = field(default_factory=KernelSpec)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def gram(spec: KernelSpec, locations) -> GramMatrix:
    """Kernel matrix ``K[i, j] = K(x_i, x_j)`` at the given locations."""
    x = np.atleast_1d(np.asarray(locations, dtype=float))
    if x.ndim != 1 or x.size == 0:
        raise InputError("gram needs a nonempty 1-D list of locations")
    entries = spec.eval(x[:, None], x[None, :])
    entries = np.array(entries, dtype=float).reshape(x.size, x.size)
    entries.setflags(write=False)
    x = x.copy()
    x.setflags(write=False)
    return GramMatrix(entries, x, spec)


def cross(spec: KernelSpec, a, b) -> np.ndarray:
    """Matrix of kernel sections ``K(a_i, b_j)``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return np.asarray(spec.eval(a[:, None], b[None, :]), dtype=float).reshape(a.size, b.size)


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower factor ``L`` with ``L @ L.T == A + jitter * I``."""

    lower: np.ndarray
    jitter: float

    def solve(self, b):
        return cho_solve((self.lower, True), b, check_finite=False)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def factor(matrix, pivot_rtol: float = 1e-13) -> CholeskyFactor:
    """Cholesky factor of a symmetric PSD matrix, escalating jitter if needed.

    A rung is accepted when LAPACK succeeds and every squared pivot exceeds
    ``pivot_rtol * max(diag)``; the floor catches exactly singular matrices
    whose roundoff happens to leave a tiny positive pivot.

    Raises
    ------
    NumericalError
        If the largest jitter rung still fails.
    """
    a = np.asarray(matrix.entries if isinstance(matrix, GramMatrix) else matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"factor needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    diag = np.diag(a)
    scale = float(np.trace(a)) / n
    floor = pivot_rtol * float(np.max(np.abs(diag))) if n else 0.0
    for rung in JITTER_LADDER:
        jitter = rung * scale
        if rung > 0 and not jitter > 0:
            break
        try:
            lower = np.linalg.cholesky(a + jitter * np.eye(n) if jitter else a)
        except np.linalg.LinAlgError:
            continue
        pivots = np.diag(lower)
        if np.all(np.isfinite(lower)) and np.min(pivots) ** 2 > floor:
            return CholeskyFactor(lower, jitter)
    eig = np.linalg.eigvalsh((a + a.T) / 2.0) if np.all(np.isfinite(a)) else np.array([np.nan])
    raise NumericalError(
        "Cholesky factorization failed at maximum jitter",
        {
            "n": n,
            "max_jitter": JITTER_LADDER[-1] * scale,
            "min_eigenvalue": float(eig[0]),
            "max_eigenvalue": float(eig[-1]),
            "asymmetry": float(np.max(np.abs(a - a.T))) if n else 0.0,
        },
    )
