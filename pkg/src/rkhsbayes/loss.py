"""Per-measurement losses and the noise densities they stand for.

A loss ``V`` and noise scale ``sigma`` define the unnormalized measurement
density ``exp(-V(r) / (2 sigma^2))``.  The absolute loss scaled by
``2 sqrt(2) sigma`` turns that density into a Laplace law with variance
``sigma^2``, which in turn is a Gaussian scale mixture with exponentially
distributed variance (see :func:`mixture_integrand`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

LOSS_KINDS = ("quadratic", "absolute", "vapnik", "huber")


@dataclass(frozen=True)
class LossSpec:
    """A convex loss ``scale * V(r)``.

    ``eps`` is the Vapnik insensitivity half-width and ``delta`` the Huber
    threshold; each is ignored by the other kinds.  ``sigma`` is the noise
    scale used only when the loss is read as a density.
    """

    kind: str = "quadratic"
    eps: float = 0.0
    delta: float = 1.0
    scale: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InputError(f"unknown loss kind {self.kind!r}")
        if self.eps < 0:
            raise InputError(f"vapnik eps must be nonnegative, got {self.eps}")
        if not self.delta > 0:
            raise InputError(f"huber delta must be positive, got {self.delta}")
        if not self.scale > 0 or not self.sigma > 0:
            raise InputError("loss scale and sigma must be positive")

    @property
    def smooth(self) -> bool:
        return self.kind in ("quadratic", "huber")

    def value(self, r):
        return value(self, r)


def value(spec: LossSpec, r):
    """Loss at residual ``r`` (array friendly)."""
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    if spec.kind == "quadratic":
        out = r * r
    elif spec.kind == "absolute":
        out = a
    elif spec.kind == "vapnik":
        out = np.maximum(0.0, a - spec.eps)
    else:
        d = spec.delta
        out = np.where(a <= d, 0.5 * r * r, d * a - 0.5 * d * d)
    out = spec.scale * out
    return float(out) if out.ndim == 0 else out


def smoothed(spec: LossSpec, r, mu: float):
    """Value, first and second derivative of the ``mu``-smoothed loss.

    Kinks of the absolute and Vapnik losses are replaced by quadratic pieces
    of width ``mu``.  Quadratic and Huber losses are returned unchanged.
    """
    r = np.asarray(r, dtype=float)
    s = spec.scale
    if spec.kind == "quadratic":
        return s * r * r, 2.0 * s * r, np.full_like(r, 2.0 * s)
    if spec.kind == "huber":
        d = spec.delta
        inside = np.abs(r) <= d
        v = np.where(inside, 0.5 * r * r, d * np.abs(r) - 0.5 * d * d)
        g = np.where(inside, r, d * np.sign(r))
        h = inside.astype(float)
        return s * v, s * g, s * h
    eps = spec.eps if spec.kind == "vapnik" else 0.0
    t = np.abs(r) - eps
    sign = np.sign(r)
    quad = (t > 0) & (t <= mu)
    lin = t > mu
    v = np.where(lin, t - 0.5 * mu, np.where(quad, t * t / (2.0 * mu), 0.0))
    g = sign * np.where(lin, 1.0, np.where(quad, t / mu, 0.0))
    h = np.where(quad, 1.0 / mu, 0.0)
    if eps == 0.0:
        # |r| < mu is one quadratic piece, symmetric about zero
        h = np.where(np.abs(r) <= mu, 1.0 / mu, 0.0)
    return s * v, s * g, s * h


def parse_loss(text: str) -> LossSpec:
    """Parse ``l2``, ``l1``, ``vapnik:<eps>`` or ``huber:<delta>``."""
    text = text.strip()
    if text in ("l2", "quadratic"):
        return LossSpec("quadratic")
    if text in ("l1", "absolute"):
        return LossSpec("absolute")
    for prefix, kind, field_name in (("vapnik", "vapnik", "eps"), ("huber", "huber", "delta")):
        if text == prefix:
            return LossSpec(kind)
        if text.startswith(prefix + ":"):
            try:
                param = float(text[len(prefix) + 1 :])
            except ValueError:
                raise InputError(f"malformed loss parameter in {text!r}") from None
            return LossSpec(kind, **{field_name: param})
    raise InputError(f"unknown loss {text!r}")


def calibrated_absolute(sigma: float) -> LossSpec:
    """Absolute loss scaled so the implied noise is Laplace with variance ``sigma**2``.

    ``exp(-V(r) / (2 sigma^2))`` with ``V(r) = 2 sqrt(2) sigma |r|`` equals
    ``exp(-sqrt(2) |r| / sigma)``.
    """
    if not sigma > 0:
        raise InputError(f"sigma must be positive, got {sigma}")
    return LossSpec("absolute", scale=2.0 * math.sqrt(2.0) * sigma, sigma=sigma)


def laplace_density(e, sigma: float):
    """Zero-mean Laplace density with variance ``sigma**2``."""
    e = np.asarray(e, dtype=float)
    out = np.exp(-math.sqrt(2.0) * np.abs(e) / sigma) / (math.sqrt(2.0) * sigma)
    return float(out) if out.ndim == 0 else out


def mixture_integrand(e, tau, sigma: float):
    """``N(e; 0, tau)`` times the exponential density of ``tau`` with mean ``sigma**2``.

    Integrating over ``tau`` in ``(0, inf)`` gives :func:`laplace_density`.
    """
    e = np.asarray(e, dtype=float)
    tau = np.asarray(tau, dtype=float)
    s2 = sigma * sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        gauss = np.exp(-(e * e) / (2.0 * tau)) / np.sqrt(2.0 * np.pi * tau)
    out = np.where(tau > 0, gauss * np.exp(-tau / s2) / s2, 0.0)
    return float(out) if out.ndim == 0 else out


def log_density_unnormalized(spec: LossSpec, r):
    """``-V(r) / (2 sigma^2)``, the log measurement density up to a constant."""
    return -np.asarray(value(spec, r)) / (2.0 * spec.sigma**2)
