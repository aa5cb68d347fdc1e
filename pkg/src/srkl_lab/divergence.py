"""Reverse KL and skew reverse KL penalties.

Everything here is a pure function of its arguments. Array arguments are
broadcast with numpy; scalar inputs return Python floats.

The skew reverse KL of ``p`` from ``q`` is the KL divergence of ``p`` from the
mixture ``alpha * p + (1 - alpha) * q``. Its per-token gradient coefficient,
written in terms of the likelihood ratio ``r = p / q``, is

    C(r) = log(r / d) + 1 - alpha * r / d,     d = alpha * r + 1 - alpha

which is strictly increasing in ``r`` and bounded above by ``log(1 / alpha)``.
With ``alpha -> 0`` it becomes the reverse KL coefficient ``log r + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np

from .errors import DomainError, ShapeError

# log arguments are clamped here; stored distributions are never touched
LOG_FLOOR = 1e-300
NORMALIZATION_TOL = 1e-9


class DivergenceKind(str, Enum):
    NONE = "none"
    RKL = "rkl"
    SRKL = "srkl"


class Estimator(str, Enum):
    EXACT = "exact"      # full-vocabulary sum at every position
    SAMPLED = "sampled"  # single observed-token term


@dataclass(frozen=True)
class DivergenceSpec:
    kind: DivergenceKind = DivergenceKind.SRKL
    alpha: float = 0.8
    beta: float = 0.04
    estimator: Estimator = Estimator.EXACT

    def __post_init__(self):
        object.__setattr__(self, "kind", DivergenceKind(self.kind))
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be a finite nonnegative number, got {self.beta}")
        if self.kind is DivergenceKind.SRKL and not 0 < self.alpha < 1:
            raise DomainError(f"SRKL needs 0 < alpha < 1, got {self.alpha} (use kind=rkl for alpha=0)")

    @property
    def active(self) -> bool:
        """True when the penalty changes anything downstream."""
        return self.kind is not DivergenceKind.NONE and self.beta > 0

    @property
    def coefficient_cap(self) -> float:
        """Supremum of the gradient coefficient (``inf`` for RKL)."""
        if self.kind is DivergenceKind.SRKL:
            return -math.log(self.alpha)
        if self.kind is DivergenceKind.NONE:
            return 0.0
        return math.inf


def _log(x):
    return np.log(np.maximum(x, LOG_FLOOR))


def _scalar_out(value, *inputs):
    if all(np.ndim(x) == 0 for x in inputs):
        return float(value)
    return value


def _check_distribution_pair(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ShapeError(f"distributions must be 1-d with equal length, got {p.shape} and {q.shape}")
    for name, x in (("p_theta", p), ("p_ref", q)):
        if np.any(x < 0) or abs(x.sum() - 1.0) > NORMALIZATION_TOL:
            raise DomainError(f"{name} is not a probability distribution")
    return p, q


def rkl_value(p_theta, p_ref) -> float:
    """``sum_v p_theta(v) log(p_theta(v) / p_ref(v))`` with ``0 log 0 = 0``."""
    p, q = _check_distribution_pair(p_theta, p_ref)
    support = p > 0
    if np.any(q[support] == 0):
        raise DomainError("reverse KL is undefined where p_ref = 0 < p_theta")
    terms = p[support] * (_log(p[support]) - _log(q[support]))
    return float(max(terms.sum(), 0.0))


def srkl_value(p_theta, p_ref, alpha: float) -> float:
    """KL of ``p_theta`` from the mixture ``alpha p_theta + (1 - alpha) p_ref``."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    p, q = _check_distribution_pair(p_theta, p_ref)
    support = p > 0
    ps = p[support]
    mix = alpha * ps + (1 - alpha) * q[support]
    return float(max((ps * (_log(ps) - _log(mix))).sum(), 0.0))


def token_penalty(kind, alpha, p_theta, p_ref):
    """Vectorized single-token penalty ``log(p_theta / anchor)``; no argument checks."""
    kind = DivergenceKind(kind)
    if kind is DivergenceKind.NONE:
        return np.zeros(np.broadcast(p_theta, p_ref).shape)
    if kind is DivergenceKind.RKL:
        return _log(p_theta) - _log(p_ref)
    return _log(p_theta) - _log(alpha * p_theta + (1 - alpha) * p_ref)


def sampled_token_penalty(spec: DivergenceSpec, p_theta_at_token, p_ref_at_token):
    """Per-token estimator of the penalty at the observed token."""
    p = np.asarray(p_theta_at_token, dtype=float)
    q = np.asarray(p_ref_at_token, dtype=float)
    if spec.kind is DivergenceKind.NONE:
        return _scalar_out(np.zeros(np.broadcast(p, q).shape), p, q)
    if np.any((p <= 0) | (p > 1)) or np.any((q < 0) | (q > 1)):
        raise DomainError("token probabilities must lie in (0, 1]")
    if spec.kind is DivergenceKind.RKL and np.any(q == 0):
        raise DomainError("reverse KL token penalty is undefined at p_ref = 0")
    return _scalar_out(token_penalty(spec.kind, spec.alpha, p, q), p, q)


def srkl_coefficient(alpha, ratio):
    """C_alpha(r) for SRKL, vectorized, no argument checks.

    With ``u = (1 - alpha) / (alpha r + 1 - alpha)`` the coefficient equals
    ``-log(alpha) + log(1 - u) + u``. For ``u < 1/2`` the last two terms are
    summed through ``log1p`` so the result never rounds above the cap.
    """
    r = np.asarray(ratio, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    d = alpha * r + (1 - alpha)
    u = (1 - alpha) / d
    with np.errstate(divide="ignore", invalid="ignore"):
        near_cap = -np.log(alpha) + (np.log1p(-np.minimum(u, 0.5)) + u)
        far = _log(r) - np.log(d) + u
    return np.where(u < 0.5, near_cap, far)


def rkl_coefficient(ratio):
    return _log(np.asarray(ratio, dtype=float)) + 1.0


def gradient_coefficient(spec: DivergenceSpec, ratio):
    """Scalar multiplying the score function for the penalty term.

    RKL: ``log r + 1``; SRKL: ``C_alpha(r)``; no penalty: 0. The "+1" constant
    is kept on purpose even though it vanishes in expectation.
    """
    r = np.asarray(ratio, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("likelihood ratio must be positive")
    if spec.kind is DivergenceKind.NONE:
        out = np.zeros_like(r)
    elif spec.kind is DivergenceKind.RKL:
        out = rkl_coefficient(r)
    else:
        out = srkl_coefficient(spec.alpha, r)
    return _scalar_out(out, r)


def gradient_coefficient_derivative(alpha, ratio):
    """``dC/dr = (1 - alpha)^2 / (r (alpha r + 1 - alpha)^2)``, always positive."""
    r = np.asarray(ratio, dtype=float)
    a = np.asarray(alpha, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("likelihood ratio must be positive")
    if np.any((a <= 0) | (a >= 1)):
        raise DomainError("alpha must lie in (0, 1)")
    out = (1 - a) ** 2 / (r * (a * r + 1 - a) ** 2)
    return _scalar_out(out, r, a)


@dataclass(frozen=True)
class LandscapeGrid:
    """Log-spaced grid over ``[lo, hi]`` on both probability axes."""

    n: int = 200
    lo: float = 1e-4
    hi: float = 1 - 1e-4

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs at least 2 points per axis")
        if not 0 < self.lo < self.hi < 1:
            raise ValueError("grid bounds must satisfy 0 < lo < hi < 1")

    def axis(self) -> np.ndarray:
        return np.geomspace(self.lo, self.hi, self.n)

    @classmethod
    def parse(cls, text: str) -> "LandscapeGrid":
        """Parse ``"N"`` or ``"N:lo:hi"``."""
        parts = text.split(":")
        if len(parts) not in (1, 3):
            raise ValueError(f"malformed grid spec {text!r}; expected N or N:lo:hi")
        try:
            n = int(parts[0])
            if len(parts) == 1:
                return cls(n)
            return cls(n, float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise ValueError(f"malformed grid spec {text!r}: {exc}") from None


def penalty_landscape(alpha: float, grid: LandscapeGrid | None = None) -> np.ndarray:
    """Per-token penalty on a (p_theta, p_ref) grid.

    Returns an ``(n * n, 3)`` array of ``p_theta, p_ref, penalty`` rows with
    ``p_theta`` varying slowest. ``alpha = 0`` gives the reverse KL landscape.
    """
    if not 0 <= alpha < 1:
        raise DomainError(f"alpha must lie in [0, 1), got {alpha}")
    grid = grid or LandscapeGrid()
    axis = grid.axis()
    pt, pr = np.meshgrid(axis, axis, indexing="ij")
    kind = DivergenceKind.RKL if alpha == 0 else DivergenceKind.SRKL
    pen = token_penalty(kind, alpha, pt, pr)
    return np.column_stack([pt.ravel(), pr.ravel(), pen.ravel()])


def landscape_csv_lines(table: np.ndarray) -> Iterator[str]:
    yield "p_theta,p_ref,penalty"
    for row in table:
        yield ",".join(f"{x:.12g}" for x in row)
