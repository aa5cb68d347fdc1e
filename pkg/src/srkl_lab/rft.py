"""Group-relative policy-gradient updates with a divergence penalty.

The batch objective is

    J = mean over rollouts of  1/|o| * sum_t [ surrogate_t - beta * penalty_t ]

and its gradient is assembled token by token as
``(surrogate coefficient - beta * penalty coefficient) * grad log pi(o_t)``.
In exact mode the penalty at a position is the full-vocabulary divergence of
that row, so its gradient touches every entry of the row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .divergence import (DivergenceKind, DivergenceSpec, Estimator, gradient_coefficient,
                         token_penalty)
from .errors import DomainError, GroupTooSmall, StaleRollouts
from .policy import PolicySnapshot, Rollout, token_entropy

ADV_EPS = 1e-6


class SurrogateKind(str, Enum):
    GRPO_TOKEN = "grpo_token"
    SEQUENCE_RATIO = "sequence_ratio"


class MaskMode(str, Enum):
    FULL = "full"
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class SurrogateSpec:
    kind: SurrogateKind = SurrogateKind.GRPO_TOKEN
    clip_eps: float = 0.2
    clip_eps_high: float | None = None  # asymmetric upper clip; defaults to clip_eps
    mask_mode: MaskMode = MaskMode.FULL

    def __post_init__(self):
        object.__setattr__(self, "kind", SurrogateKind(self.kind))
        object.__setattr__(self, "mask_mode", MaskMode(self.mask_mode))
        if not 0 < self.clip_eps < 1:
            raise DomainError("clip_eps must lie in (0, 1)")
        if self.clip_eps_high is not None and not self.clip_eps_high > 0:
            raise DomainError("clip_eps_high must be positive")

    @property
    def clip_band(self) -> tuple[float, float]:
        high = self.clip_eps if self.clip_eps_high is None else self.clip_eps_high
        return 1.0 - self.clip_eps, 1.0 + high


def group_advantages(rewards: Sequence[float], eps: float = ADV_EPS) -> np.ndarray:
    """``(r - mean) / (population std + eps)``; all-equal rewards give exact zeros."""
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise GroupTooSmall(f"a group needs at least 2 rewards, got {r.size}")
    if np.all(r == r[0]):
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + eps)


def apply_mask(advantages, mode) -> np.ndarray:
    a = np.asarray(advantages, dtype=float)
    mode = MaskMode(mode)
    if mode is MaskMode.POSITIVE:
        return np.where(a < 0, 0.0, a)
    if mode is MaskMode.NEGATIVE:
        return np.where(a > 0, 0.0, a)
    return a.copy()


def surrogate_value(spec: SurrogateSpec, advantage, ratio):
    lo, hi = spec.clip_band
    a = np.asarray(advantage, dtype=float)
    r = np.asarray(ratio, dtype=float)
    return np.minimum(r * a, np.clip(r, lo, hi) * a)


def surrogate_coefficient(spec: SurrogateSpec, advantage, ratio):
    """Derivative of ``min(r A, clip(r) A)`` with respect to ``log pi``.

    Equals ``r * A`` while the unclipped branch is active and 0 once clipping
    binds against the advantage direction. At ``r = 1`` this is just ``A``.
    """
    a = np.asarray(advantage, dtype=float)
    r = np.asarray(ratio, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("importance ratio must be positive")
    lo, hi = spec.clip_band
    unclipped = np.where(a > 0, r <= hi, r >= lo)
    out = np.where(unclipped, r * a, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class RolloutGroup:
    prompt: tuple[int, ...]
    rollouts: list[Rollout]
    advantages: np.ndarray

    def __post_init__(self):
        if len(self.rollouts) < 2:
            raise GroupTooSmall("a group needs at least 2 rollouts")
        self.advantages = np.asarray(self.advantages, dtype=float)
        if self.advantages.shape != (len(self.rollouts),):
            raise ValueError("one advantage per rollout")

    @property
    def group_size(self) -> int:
        return len(self.rollouts)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.rollouts], dtype=float)

    @classmethod
    def from_rollouts(cls, prompt, rollouts: list[Rollout]) -> "RolloutGroup":
        if any(r.reward is None for r in rollouts):
            raise ValueError("score rollouts before grouping them")
        return cls(tuple(prompt), list(rollouts), group_advantages([r.reward for r in rollouts]))


@dataclass
class TrainStepReport:
    step: int
    mean_reward: float
    mean_advantage_magnitude: float
    surrogate_term: float
    penalty_term: float
    grad_norm: float
    entropy: float

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "mean_reward": self.mean_reward,
            "mean_advantage_magnitude": self.mean_advantage_magnitude,
            "surrogate_term": self.surrogate_term,
            "penalty_term": self.penalty_term,
            "grad_norm": self.grad_norm,
            "entropy": self.entropy,
        }


@dataclass
class _Flat:
    """Every response position of a batch laid out in fixed order."""

    rows: np.ndarray
    tokens: np.ndarray
    seq_id: np.ndarray
    weights: np.ndarray      # 1 / (n_rollouts * |o|)
    advantages: np.ndarray   # masked, per position
    old_logp: np.ndarray
    n_rollouts: int


def _flatten(groups: Sequence[RolloutGroup], mask_mode: MaskMode) -> _Flat:
    rows, toks, seq, w, adv, old = [], [], [], [], [], []
    rollouts = [(ro, a) for g in groups for ro, a in zip(g.rollouts, apply_mask(g.advantages, mask_mode))]
    n = len(rollouts)
    for i, (ro, a) in enumerate(rollouts):
        length = len(ro)
        if length == 0:
            continue
        rows.append(ro.contexts)
        toks.append(np.asarray(ro.response, dtype=np.intp))
        seq.append(np.full(length, i, dtype=np.intp))
        w.append(np.full(length, 1.0 / (n * length)))
        adv.append(np.full(length, a))
        old.append(ro.logp_theta)
    cat = lambda xs, dt=float: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)
    return _Flat(cat(rows, np.intp), cat(toks, np.intp), cat(seq, np.intp), cat(w), cat(adv), cat(old), n)


def _ratios(flat: _Flat, logp: np.ndarray, surr: SurrogateSpec) -> np.ndarray:
    log_ratio = logp - flat.old_logp
    if surr.kind is SurrogateKind.SEQUENCE_RATIO:
        # geometric-mean per-token ratio of the whole sequence, shared by its tokens
        sums = np.bincount(flat.seq_id, weights=log_ratio, minlength=flat.n_rollouts)
        counts = np.bincount(flat.seq_id, minlength=flat.n_rollouts)
        log_ratio = (sums / np.maximum(counts, 1))[flat.seq_id]
    return np.exp(log_ratio)


def _exact_penalty(div: DivergenceSpec, p: np.ndarray, q: np.ndarray):
    """Row-wise divergence and its gradient with respect to the row logits."""
    pen = p * token_penalty(div.kind, div.alpha, p, q)
    value = pen.sum(axis=1)
    coef = gradient_coefficient(div, p / q)
    grad = p * (coef - (p * coef).sum(axis=1, keepdims=True))
    return value, grad, coef


@dataclass
class BatchGradient:
    surrogate: np.ndarray        # gradient of the surrogate part
    penalty: np.ndarray          # gradient of -beta * penalty part
    surrogate_term: float
    penalty_term: float
    max_penalty_coefficient: float

    @property
    def total(self) -> np.ndarray:
        return self.surrogate + self.penalty


def batch_gradient(policy: PolicySnapshot, ref: PolicySnapshot, groups: Sequence[RolloutGroup],
                   div: DivergenceSpec, surr: SurrogateSpec, *, _coef_offset: float = 0.0) -> BatchGradient:
    """Analytic gradient of the batch objective at ``policy``.

    Old-policy log-probabilities are the ones stored in the rollouts, so the
    importance ratio is 1 when ``policy`` is the sampling policy.
    ``_coef_offset`` corrupts the surrogate coefficient; it exists only as a
    negative control for the gradient checker.
    """
    flat = _flatten(groups, surr.mask_mode)
    shape = policy.logits.shape
    p_rows = policy.probs[flat.rows]
    logp = policy.log_probs[flat.rows, flat.tokens]
    ratio = _ratios(flat, logp, surr)
    onehot_minus_p = -p_rows
    onehot_minus_p[np.arange(len(flat.rows)), flat.tokens] += 1.0

    coef = surrogate_coefficient(surr, flat.advantages, ratio) + _coef_offset
    surr_grad = np.zeros(shape)
    np.add.at(surr_grad, flat.rows, (flat.weights * coef)[:, None] * onehot_minus_p)
    surr_term = float(np.sum(flat.weights * surrogate_value(surr, flat.advantages, ratio)))

    pen_grad = np.zeros(shape)
    pen_term = 0.0
    max_coef = -math.inf
    if div.active:
        q_rows = ref.probs[flat.rows]
        if div.estimator is Estimator.EXACT:
            value, row_grad, pcoef = _exact_penalty(div, p_rows, q_rows)
        else:
            p_tok = p_rows[np.arange(len(flat.rows)), flat.tokens]
            q_tok = q_rows[np.arange(len(flat.rows)), flat.tokens]
            value = token_penalty(div.kind, div.alpha, p_tok, q_tok)
            pcoef = gradient_coefficient(div, p_tok / q_tok)
            row_grad = pcoef[:, None] * onehot_minus_p
        np.add.at(pen_grad, flat.rows, (-div.beta * flat.weights)[:, None] * row_grad)
        pen_term = float(div.beta * np.sum(flat.weights * value))
        if np.size(pcoef):
            max_coef = float(np.max(pcoef))
    return BatchGradient(surr_grad, pen_grad, surr_term, pen_term, max_coef)


def batch_objective(policy: PolicySnapshot, ref: PolicySnapshot, groups: Sequence[RolloutGroup],
                    div: DivergenceSpec, surr: SurrogateSpec) -> float:
    """Scalar objective whose gradient ``batch_gradient`` returns (exact mode)."""
    flat = _flatten(groups, surr.mask_mode)
    logp = policy.log_probs[flat.rows, flat.tokens]
    ratio = _ratios(flat, logp, surr)
    total = float(np.sum(flat.weights * surrogate_value(surr, flat.advantages, ratio)))
    if div.active:
        p_rows = policy.probs[flat.rows]
        q_rows = ref.probs[flat.rows]
        if div.estimator is Estimator.EXACT:
            value = (p_rows * token_penalty(div.kind, div.alpha, p_rows, q_rows)).sum(axis=1)
        else:
            idx = np.arange(len(flat.rows))
            value = token_penalty(div.kind, div.alpha, p_rows[idx, flat.tokens], q_rows[idx, flat.tokens])
        total -= div.beta * float(np.sum(flat.weights * value))
    return total


def train_step(policy: PolicySnapshot, ref: PolicySnapshot, groups: Sequence[RolloutGroup],
               div: DivergenceSpec, surr: SurrogateSpec, lr: float,
               debug: bool = False) -> tuple[PolicySnapshot, TrainStepReport]:
    """One on-policy gradient-ascent step on the batch objective."""
    if not lr > 0:
        raise DomainError("learning rate must be positive")
    rollouts = [ro for g in groups for ro in g.rollouts]
    if not rollouts:
        raise ValueError("empty batch")
    stale = {ro.policy_version for ro in rollouts} - {policy.version}
    if stale:
        raise StaleRollouts(f"rollouts from versions {sorted(stale)}, policy is at {policy.version}")
    grad = batch_gradient(policy, ref, groups, div, surr)
    if debug and div.kind is DivergenceKind.SRKL and div.active:
        assert div.beta * grad.max_penalty_coefficient <= div.beta * div.coefficient_cap, \
            "SRKL penalty coefficient exceeded its cap"
    total = grad.total
    masked = np.concatenate([apply_mask(g.advantages, surr.mask_mode) for g in groups])
    report = TrainStepReport(
        step=policy.version + 1,
        mean_reward=float(np.mean([ro.reward for ro in rollouts])),
        mean_advantage_magnitude=float(np.mean(np.abs(masked))),
        surrogate_term=grad.surrogate_term,
        penalty_term=grad.penalty_term,
        grad_norm=float(np.linalg.norm(total)),
        entropy=token_entropy(policy, rollouts),
    )
    return policy.updated(lr * total), report
