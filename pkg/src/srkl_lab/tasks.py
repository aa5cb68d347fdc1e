"""Synthetic tasks with verifiable rewards.

ModularSum prompts are ``k`` digit tokens; the answer is their sum mod 10.
FactProbe prompts are a marker token (any non-digit, non-EOS id) followed by
``k`` digits, with gold answers frozen in a lookup table. Because a policy
with ``context_order == k`` sees only the last ``k`` prompt tokens when it
answers, a probe shares its answer row with the ModularSum prompt made of the
same digits, which is how training on one task moves behaviour on the other.

Digit tokens are ids 0-9, so the vocabulary needs at least 12 ids (digits,
one marker, EOS).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import CalibrationReport, CalSample, compute_ece
from .errors import EmptyResponse
from .policy import PolicyConfig, PolicySnapshot, Rollout, sample_rollout

N_DIGITS = 10


class TaskKind(str, Enum):
    MODULAR_SUM = "modular_sum"
    FACT_PROBE = "fact_probe"


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    vocab_size: int
    num_operands: int = 2
    eos_token: int = 15
    table: dict = field(default_factory=dict, hash=False)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        if self.vocab_size < N_DIGITS + 2:
            raise ValueError("tasks need digit tokens 0-9 plus a marker and an EOS id")
        if self.num_operands < 1:
            raise ValueError("num_operands must be positive")
        if self.kind is TaskKind.FACT_PROBE:
            if not self.table:
                raise ValueError("a FactProbe task needs a non-empty table")
            if any(all(t < N_DIGITS for t in key) and len(key) == self.num_operands for key in self.table):
                raise ValueError("FactProbe prompts must not overlap the ModularSum prompt space")

    @property
    def markers(self) -> list[int]:
        return [t for t in range(N_DIGITS, self.vocab_size) if t != self.eos_token]

    @property
    def prompts(self) -> list[tuple[int, ...]]:
        if self.kind is TaskKind.FACT_PROBE:
            return sorted(self.table)
        return list(itertools.product(range(N_DIGITS), repeat=self.num_operands))


@dataclass(frozen=True)
class RewardOutcome:
    reward: float
    extracted_answer: str


def modular_sum(vocab_size: int = 16, num_operands: int = 2, eos_token: int = 15) -> TaskSpec:
    return TaskSpec(TaskKind.MODULAR_SUM, vocab_size, num_operands, eos_token)


def generate_prompt(spec: TaskSpec, rng: np.random.Generator) -> tuple[int, ...]:
    if spec.kind is TaskKind.MODULAR_SUM:
        return tuple(int(d) for d in rng.integers(0, N_DIGITS, size=spec.num_operands))
    keys = spec.prompts
    return keys[int(rng.integers(len(keys)))]


def gold_answer(spec: TaskSpec, prompt: Sequence[int]) -> int:
    if spec.kind is TaskKind.MODULAR_SUM:
        return sum(prompt) % N_DIGITS
    return spec.table[tuple(prompt)]


def extract_answer(response: Sequence[int], eos_token: int) -> str:
    """Last non-EOS token rendered as a string ("" if there is none)."""
    for tok in reversed(response):
        if tok != eos_token:
            return str(int(tok))
    return ""


def score(spec: TaskSpec, prompt: Sequence[int], response: Sequence[int]) -> RewardOutcome:
    if len(response) == 0:
        raise EmptyResponse("cannot score an empty response")
    answer = extract_answer(response, spec.eos_token)
    reward = 1.0 if answer == str(gold_answer(spec, prompt)) else -1.0
    return RewardOutcome(reward, answer)


def score_rollout(spec: TaskSpec, rollout: Rollout) -> Rollout:
    out = score(spec, rollout.prompt, rollout.response)
    rollout.reward = out.reward
    rollout.answer = out.extracted_answer
    return rollout


# -- reference policy and probe table -------------------------------------------

def build_reference(config: PolicyConfig, task: TaskSpec, rng: np.random.Generator,
                    bias: float = 1.0, noise: float = 1.0) -> PolicySnapshot:
    """Base policy: Gaussian logits plus a ``bias`` offset toward each ModularSum answer."""
    logits = noise * rng.standard_normal((config.n_contexts, config.vocab_size))
    for prompt in modular_sum(task.vocab_size, task.num_operands, task.eos_token).prompts:
        logits[config.context_index(prompt), gold_answer(task, prompt)] += bias
    return PolicySnapshot(config, logits)


def build_fact_probe(ref: PolicySnapshot, task: TaskSpec, n_probes: int,
                     rng: np.random.Generator) -> TaskSpec:
    """Probe table whose gold answers are drawn from the reference's own beliefs.

    Each gold is sampled from the reference's digit distribution at the probe's
    answer row, so the reference's majority-vote confidence tracks its
    accuracy: the base model starts out calibrated on the probes.
    """
    markers = task.markers
    candidates = [(m,) + digits for m in markers
                  for digits in itertools.product(range(N_DIGITS), repeat=task.num_operands)]
    if n_probes > len(candidates):
        raise ValueError(f"at most {len(candidates)} probes available, asked for {n_probes}")
    chosen = rng.choice(len(candidates), size=n_probes, replace=False)
    table = {}
    for i in sorted(chosen):
        prompt = candidates[i]
        p = ref.distribution(prompt)[:N_DIGITS]
        table[prompt] = int(rng.choice(N_DIGITS, p=p / p.sum()))
    return TaskSpec(TaskKind.FACT_PROBE, task.vocab_size, task.num_operands, task.eos_token, table, task.seed)


def save_table(spec: TaskSpec, path) -> None:
    with open(path, "w") as fh:
        for prompt in spec.prompts:
            fh.write(json.dumps({"prompt": list(prompt), "gold": spec.table[prompt]}) + "\n")


def load_table(path, vocab_size: int, num_operands: int, eos_token: int) -> TaskSpec:
    table = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            table[tuple(d["prompt"])] = int(d["gold"])
    return TaskSpec(TaskKind.FACT_PROBE, vocab_size, num_operands, eos_token, table)


def oracle_policy(config: PolicyConfig, task: TaskSpec, margin: float = 50.0) -> PolicySnapshot:
    """Deterministic policy answering every prompt of ``task`` correctly.

    Needs ``context_order >= num_operands`` (ModularSum) so each prompt has
    its own answer row; subsequent rows put their mass on EOS.
    """
    logits = np.zeros((config.n_contexts, config.vocab_size))
    logits[:, config.eos_token] = margin
    for prompt in task.prompts:
        row = config.context_index(prompt)
        logits[row] = 0.0
        logits[row, gold_answer(task, prompt)] = margin
    return PolicySnapshot(config, logits)


# -- evaluation ---------------------------------------------------------------

def sample_answers(policy: PolicySnapshot, ref: PolicySnapshot, spec: TaskSpec, n_samples: int,
                   rng: np.random.Generator) -> tuple[list[CalSample], list[Rollout]]:
    """``n_samples`` answers per prompt; each prompt gets its own child generator."""
    prompts = spec.prompts
    samples, rollouts = [], []
    for prompt, child in zip(prompts, rng.spawn(len(prompts))):
        answers = []
        for _ in range(n_samples):
            ro = sample_rollout(policy, ref, prompt, child, keep_full=False)
            answers.append(extract_answer(ro.response, spec.eos_token))
            rollouts.append(ro)
        samples.append(CalSample(prompt, tuple(answers), str(gold_answer(spec, prompt))))
    return samples, rollouts


def eval_calibration(policy: PolicySnapshot, ref: PolicySnapshot, spec: TaskSpec,
                     n_samples: int = 10, m_bins: int = 10,
                     rng: np.random.Generator | None = None) -> CalibrationReport:
    """Majority-vote ECE of ``policy`` on every probe of a FactProbe task."""
    if spec.kind is not TaskKind.FACT_PROBE:
        raise ValueError("calibration is evaluated on a FactProbe task")
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    samples, _ = sample_answers(policy, ref, spec, n_samples, rng)
    return compute_ece(samples, m_bins)


def task_accuracy(policy: PolicySnapshot, ref: PolicySnapshot, spec: TaskSpec, n_samples: int,
                  rng: np.random.Generator) -> tuple[float, list[Rollout]]:
    """Fraction of sampled responses that score +1, over every prompt of ``spec``."""
    samples, rollouts = sample_answers(policy, ref, spec, n_samples, rng)
    hits = [a == s.gold for s in samples for a in s.answers]
    return float(np.mean(hits)), rollouts
