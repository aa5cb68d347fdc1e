"""Tabular n-gram softmax policy over a small vocabulary.

Each row of the logit table is indexed by the last ``context_order`` tokens of
the running sequence (prompt followed by the response so far). Positions
before the start of the sequence are filled with a begin-of-sequence
pseudo-token whose id is ``vocab_size``; it is never sampled, so the table has
``(vocab_size + 1) ** context_order`` rows.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigMismatch, DomainError, EmptyInput

MAX_VOCAB = 256
MAX_CONTEXT_ORDER = 3
MAX_TABLE_SIZE = 50_000_000


@dataclass(frozen=True)
class PolicyConfig:
    vocab_size: int = 16
    context_order: int = 2
    max_len: int = 1
    eos_token: int = 15

    def __post_init__(self):
        if not 1 <= self.vocab_size <= MAX_VOCAB:
            raise DomainError(f"vocab_size must be in [1, {MAX_VOCAB}]")
        if not 0 <= self.context_order <= MAX_CONTEXT_ORDER:
            raise DomainError(f"context_order must be in [0, {MAX_CONTEXT_ORDER}]")
        if self.max_len < 1:
            raise DomainError("max_len must be positive")
        if not 0 <= self.eos_token < self.vocab_size:
            raise DomainError("eos_token must be a vocabulary id")
        if self.n_contexts * self.vocab_size > MAX_TABLE_SIZE:
            raise DomainError("logit table too large for a desk-scale policy")

    @property
    def bos(self) -> int:
        return self.vocab_size

    @property
    def n_contexts(self) -> int:
        return (self.vocab_size + 1) ** self.context_order

    def context_index(self, tokens: Sequence[int]) -> int:
        """Row index for the context formed by the tail of ``tokens``."""
        k = self.context_order
        if k == 0:
            return 0
        tail = list(tokens[-k:])
        ctx = [self.bos] * (k - len(tail)) + tail
        idx = 0
        for tok in ctx:
            idx = idx * (self.vocab_size + 1) + int(tok)
        return idx

    def context_tokens(self, index: int) -> tuple[int, ...]:
        base = self.vocab_size + 1
        out = []
        for _ in range(self.context_order):
            index, tok = divmod(index, base)
            out.append(tok)
        return tuple(reversed(out))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    return -terms.sum(axis=-1)


@dataclass(frozen=True, eq=False)
class PolicySnapshot:
    """Immutable logit table; training produces a new snapshot per step."""

    config: PolicyConfig
    logits: np.ndarray
    version: int = 0

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float)
        expected = (self.config.n_contexts, self.config.vocab_size)
        if logits.shape != expected:
            raise ConfigMismatch(f"logit table has shape {logits.shape}, config needs {expected}")
        if not np.all(np.isfinite(logits)):
            raise DomainError("logits must be finite")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @classmethod
    def uniform(cls, config: PolicyConfig) -> "PolicySnapshot":
        return cls(config, np.zeros((config.n_contexts, config.vocab_size)))

    @cached_property
    def probs(self) -> np.ndarray:
        p = _softmax_rows(self.logits)
        p.setflags(write=False)
        return p

    @cached_property
    def log_probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=-1, keepdims=True)
        lp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
        lp.setflags(write=False)
        return lp

    @cached_property
    def row_entropy(self) -> np.ndarray:
        return entropy_rows(self.probs)

    def distribution(self, context: Sequence[int]) -> np.ndarray:
        return self.probs[self.config.context_index(context)]

    def updated(self, delta: np.ndarray) -> "PolicySnapshot":
        """New snapshot with ``delta`` added to the logits and version bumped."""
        return PolicySnapshot(self.config, self.logits + delta, self.version + 1)

    def frozen_copy(self) -> "PolicySnapshot":
        return PolicySnapshot(self.config, self.logits.copy(), self.version)


@dataclass
class Rollout:
    """One sampled response with per-token log-probabilities under both policies."""

    prompt: tuple[int, ...]
    response: tuple[int, ...]
    contexts: np.ndarray        # row index of every response position
    logp_theta: np.ndarray
    logp_ref: np.ndarray
    config: PolicyConfig
    policy_version: int = 0
    full_theta: np.ndarray | None = None
    full_ref: np.ndarray | None = None
    reward: float | None = None
    answer: str | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.response)
        if not (len(self.contexts) == len(self.logp_theta) == len(self.logp_ref) == n):
            raise ValueError("response, contexts and log-probability arrays must align")

    def __len__(self):
        return len(self.response)


def sample_rollout(policy: PolicySnapshot, ref: PolicySnapshot, prompt: Sequence[int],
                   rng: np.random.Generator, keep_full: bool = True) -> Rollout:
    """Sample a response autoregressively until ``eos_token`` or ``max_len``."""
    cfg = policy.config
    if ref.config != cfg:
        raise ConfigMismatch("policy and reference use different configs")
    if any(not 0 <= t < cfg.vocab_size for t in prompt):
        raise DomainError("prompt tokens must be vocabulary ids")
    seq = list(prompt)
    response, rows = [], []
    probs = policy.probs
    for _ in range(cfg.max_len):
        row = cfg.context_index(seq)
        cdf = np.cumsum(probs[row])
        tok = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        tok = min(tok, cfg.vocab_size - 1)
        response.append(tok)
        rows.append(row)
        seq.append(tok)
        if tok == cfg.eos_token:
            break
    rows = np.asarray(rows, dtype=np.intp)
    toks = np.asarray(response, dtype=np.intp)
    return Rollout(
        prompt=tuple(int(t) for t in prompt),
        response=tuple(response),
        contexts=rows,
        logp_theta=policy.log_probs[rows, toks].copy(),
        logp_ref=ref.log_probs[rows, toks].copy(),
        config=cfg,
        policy_version=policy.version,
        full_theta=policy.probs[rows].copy() if keep_full else None,
        full_ref=ref.probs[rows].copy() if keep_full else None,
    )


def token_entropy(policy: PolicySnapshot, rollouts: Iterable[Rollout]) -> float:
    """Mean next-token entropy over every response position of ``rollouts``."""
    rows = [r.contexts for r in rollouts]
    if not rows or sum(len(r) for r in rows) == 0:
        raise EmptyInput("need at least one response position")
    return float(policy.row_entropy[np.concatenate(rows)].mean())


def logprob_gradient(policy: PolicySnapshot, rollout: Rollout) -> dict[int, np.ndarray]:
    """Sparse gradient of ``sum_t log pi(o_t | context_t)`` with respect to the logits.

    Keys are row indices; each value is ``sum over positions in that row of
    one_hot(o_t) - softmax(row)``.
    """
    if rollout.config != policy.config:
        raise ConfigMismatch("rollout was generated under a different policy config")
    grads: dict[int, np.ndarray] = {}
    for row, tok in zip(rollout.contexts, rollout.response):
        g = -policy.probs[row].copy()
        g[tok] += 1.0
        row = int(row)
        if row in grads:
            grads[row] += g
        else:
            grads[row] = g
    return grads


# -- checkpoints ---------------------------------------------------------------

def dumps_checkpoint(policy: PolicySnapshot) -> str:
    c = policy.config
    lines = [f"{c.vocab_size},{c.context_order},{c.max_len},{c.eos_token},{policy.version}"]
    lines.extend(",".join(repr(float(x)) for x in row) for row in policy.logits)
    return "\n".join(lines) + "\n"


def loads_checkpoint(text: str) -> PolicySnapshot:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty checkpoint")
    try:
        vocab, order, max_len, eos, version = (int(x) for x in lines[0].split(","))
    except ValueError:
        raise ValueError("checkpoint header must be vocab_size,context_order,max_len,eos_token,version") from None
    cfg = PolicyConfig(vocab, order, max_len, eos)
    rows = [[float(x) for x in line.split(",")] for line in lines[1:] if line]
    return PolicySnapshot(cfg, np.array(rows, dtype=float).reshape(cfg.n_contexts, cfg.vocab_size), version)


def save_checkpoint(policy: PolicySnapshot, path) -> None:
    Path(path).write_text(dumps_checkpoint(policy))


def load_checkpoint(path) -> PolicySnapshot:
    return loads_checkpoint(Path(path).read_text())


def with_config(policy: PolicySnapshot, **changes) -> PolicySnapshot:
    """Same logits under a config differing only in sampling fields (max_len, eos)."""
    cfg = dataclasses.replace(policy.config, **changes)
    return PolicySnapshot(cfg, policy.logits, policy.version)
