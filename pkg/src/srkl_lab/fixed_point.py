"""Single-state optimal policy under an SRKL penalty.

Maximizing ``sum_a pi(a) Q(a) - beta * SRKL(pi, pi_ref)`` over the simplex
gives, for every action, the stationarity condition

    Q(a) - lam = beta * C_alpha(r(a)),     r(a) = pi(a) / pi_ref(a)

together with ``sum_a pi_ref(a) r(a) = 1``. Because ``C_alpha`` is strictly
increasing with range ``(-inf, log 1/alpha)``, each ``r(a)`` is a unique
function of ``lam`` and the normalization pins ``lam`` down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .divergence import srkl_value
from .errors import BracketError, DomainError, NonConvergence, OutOfRange

INNER_TOL = 1e-10
OUTER_TOL = 1e-9
MAX_ITER = 10_000


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def _log_coefficient(alpha, s):
    """C_alpha evaluated at ``r = exp(s)``, plus ``dC/ds = u**2``."""
    d = alpha * np.exp(s) + 1 - alpha
    u = (1 - alpha) / d
    with np.errstate(invalid="ignore"):
        near_cap = -math.log(alpha) + (np.log1p(-np.minimum(u, 0.5)) + u)
    c = np.where(u < 0.5, near_cap, s - np.log(d) + u)
    return c, u * u


def invert_log_ratio(alpha: float, targets) -> np.ndarray:
    """Log of the unique ``r`` with ``C_alpha(r) = target``, elementwise.

    ``C_alpha`` is concave in ``s = log r`` and lies below its left asymptote
    ``s - log(1 - alpha) + 1``, so starting on that asymptote keeps every
    Newton iterate to the left of the root and the sequence increases
    monotonically into it (no overshoot, no bracketing needed).
    """
    _check_alpha(alpha)
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    if np.any(t >= -math.log(alpha)):
        raise OutOfRange("target must lie strictly below log(1/alpha)")
    s = t + math.log1p(-alpha) - 1.0
    for _ in range(MAX_ITER):
        c, slope = _log_coefficient(alpha, s)
        gap = t - c
        step = np.maximum(gap, 0.0) / slope
        s = s + step
        if np.all((gap <= INNER_TOL * 1e-3) | (step <= 4e-16 * np.maximum(1.0, np.abs(s)))):
            return s
    raise NonConvergence("coefficient inversion did not converge")


def invert_coefficient(alpha: float, target: float) -> float:
    """The ratio ``r > 0`` with ``C_alpha(r) = target``."""
    return float(np.exp(invert_log_ratio(alpha, target)[0]))


@dataclass(frozen=True)
class RegularizedProblem:
    q_values: np.ndarray
    p_ref: np.ndarray
    beta: float
    alpha: float

    def __post_init__(self):
        q = np.asarray(self.q_values, dtype=float)
        p = np.asarray(self.p_ref, dtype=float)
        if q.ndim != 1 or q.shape != p.shape or q.size == 0:
            raise DomainError("q_values and p_ref must be 1-d of equal length")
        if np.any(p <= 0) or abs(p.sum() - 1) > 1e-12:
            raise DomainError("p_ref must be a full-support distribution")
        if not self.beta > 0:
            raise DomainError("beta must be positive")
        _check_alpha(self.alpha)
        object.__setattr__(self, "q_values", q)
        object.__setattr__(self, "p_ref", p)

    @classmethod
    def from_dict(cls, d: dict) -> "RegularizedProblem":
        return cls(np.asarray(d["q_values"], float), np.asarray(d["p_ref"], float), float(d["beta"]), float(d["alpha"]))

    def objective(self, policy) -> float:
        return float(np.dot(policy, self.q_values) - self.beta * srkl_value(policy, self.p_ref, self.alpha))


@dataclass(frozen=True)
class FixedPointSolution:
    lambda_star: float
    ratios: np.ndarray
    policy: np.ndarray
    residual: float
    log_ratios: np.ndarray

    def foc_residual(self, problem: RegularizedProblem) -> float:
        # log ratios stay exact where the ratios themselves underflow
        c, _ = _log_coefficient(problem.alpha, self.log_ratios)
        return float(np.max(np.abs(problem.q_values - self.lambda_star - problem.beta * c)))

    def as_dict(self) -> dict:
        return {
            "lambda": self.lambda_star,
            "ratios": self.ratios.tolist(),
            "policy": self.policy.tolist(),
            "residual": self.residual,
        }


def solve_optimal_policy(problem: RegularizedProblem) -> FixedPointSolution:
    """Solve the stationarity condition and the normalization constraint.

    The multiplier is searched through the log-ratio ``s`` of a top-Q action,
    ``lam = max Q - beta * C_alpha(exp(s))``. This maps ``s`` in ``[0, inf)``
    monotonically onto the bracket ``(max Q - beta log(1/alpha), max Q - beta (1 - alpha)]``
    and is far better conditioned than searching ``lam`` directly, since the
    top ratio blows up as ``lam`` approaches the open end.
    """
    q, p, beta, alpha = problem.q_values, problem.p_ref, problem.beta, problem.alpha
    top = int(np.argmax(q))
    q_max = q[top]
    cap = -math.log(alpha)

    tied = q == q_max
    below_cap = np.nextafter(cap, -math.inf)

    def log_ratios(s_top):
        c_top = float(_log_coefficient(alpha, np.array(s_top))[0])
        lam = q_max - beta * c_top
        s = np.full(q.shape, float(s_top))
        if not np.all(tied):
            targets = np.minimum((q[~tied] - lam) / beta, below_cap)
            s[~tied] = invert_log_ratio(alpha, targets)
        return lam, s

    def excess(s_top):
        return float(np.dot(p, np.exp(log_ratios(s_top)[1])) - 1.0)

    lo, hi = 0.0, -math.log(p[top])
    f_lo = excess(lo)
    if f_lo > OUTER_TOL:
        raise BracketError("normalization exceeds 1 with every ratio at most 1")
    if abs(f_lo) <= 1e-15 or hi == 0.0:
        s_top = lo
    else:
        # the top action alone carries mass 1 at hi, so excess(hi) >= 0 up to rounding
        step = 1e-12 * max(1.0, hi)
        while excess(hi) < 0:
            hi += step
            step *= 2
        s_top = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=MAX_ITER)
    lam, s = log_ratios(s_top)
    ratios = np.exp(s)
    policy = p * ratios
    residual = float(abs(policy.sum() - 1.0))
    if residual > OUTER_TOL:
        raise NonConvergence(f"normalization residual {residual:.3g} above tolerance")
    return FixedPointSolution(float(lam), ratios, policy, residual, s)


def rkl_tilted_policy(q_values, p_ref, beta: float) -> np.ndarray:
    """``pi(a) proportional to p_ref(a) exp(Q(a) / beta)``, the reverse KL optimum."""
    if not beta > 0:
        raise DomainError("beta must be positive")
    q = np.asarray(q_values, dtype=float)
    p = np.asarray(p_ref, dtype=float)
    z = np.log(p) + q / beta
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
