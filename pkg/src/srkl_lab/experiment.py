"""Training runs, gradient checks and alpha sweeps.

Randomness: every draw comes from ``numpy.random.default_rng([seed, stream, ...counters])``.
Streams are fixed integers (reference init, probe table, training, evaluation,
gradient check); training rollouts are keyed by ``(step, prompt, rollout)``,
so the order in which rollouts are generated never changes the result.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import RunConfig, emit_config
from .divergence import DivergenceKind, Estimator
from .errors import ConfigError
from .policy import PolicySnapshot, sample_rollout, save_checkpoint, token_entropy
from .rft import RolloutGroup, batch_gradient, batch_objective, train_step
from .tasks import (TaskSpec, build_fact_probe, build_reference, eval_calibration, generate_prompt,
                    modular_sum, save_table, score_rollout, task_accuracy)

log = logging.getLogger(__name__)

STREAM_REF, STREAM_PROBES, STREAM_TRAIN, STREAM_EVAL, STREAM_GRADCHECK = range(5)

EVAL_KEYS = ("accuracy_train_task", "accuracy_probe", "ece_probe", "entropy_train_task")
GRADCHECK_TOL = 1e-4


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed, *keys])


@dataclass
class Setup:
    config: RunConfig
    task: TaskSpec
    ref: PolicySnapshot
    probes: TaskSpec


def build_setup(cfg: RunConfig) -> Setup:
    cfg.validate()
    pcfg = cfg.policy_config()
    task = modular_sum(pcfg.vocab_size, cfg.task.num_operands, pcfg.eos_token)
    ref = build_reference(pcfg, task, stream(cfg.seed, STREAM_REF), cfg.task.ref_bias, cfg.task.ref_noise)
    probes = build_fact_probe(ref, task, cfg.task.n_probes, stream(cfg.seed, STREAM_PROBES))
    if set(probes.prompts) & set(task.prompts):
        raise ConfigError("probe prompts leak into the training prompt space")
    return Setup(cfg, task, ref, probes)


def sample_batch(policy: PolicySnapshot, ref: PolicySnapshot, task: TaskSpec, cfg: RunConfig,
                 step: int, keep_full: bool = True, seed_stream: int = STREAM_TRAIN) -> list[RolloutGroup]:
    groups = []
    for j in range(cfg.train.prompts_per_step):
        prompt = generate_prompt(task, stream(cfg.seed, seed_stream, step, j, 0))
        rollouts = [score_rollout(task, sample_rollout(policy, ref, prompt, stream(cfg.seed, seed_stream, step, j, i + 1),
                                                       keep_full=keep_full))
                    for i in range(cfg.train.group_size)]
        groups.append(RolloutGroup.from_rollouts(prompt, rollouts))
    return groups


def evaluate(policy: PolicySnapshot, setup: Setup) -> dict:
    """Train-task accuracy, probe accuracy/ECE and train-task entropy.

    Uses the same evaluation stream every call, so successive evaluations
    share random numbers and differences reflect the policy, not the draws.
    """
    cfg = setup.config
    acc, rollouts = task_accuracy(policy, setup.ref, setup.task, cfg.eval.n_samples,
                                  stream(cfg.seed, STREAM_EVAL, 0))
    report = eval_calibration(policy, setup.ref, setup.probes, cfg.eval.n_samples, cfg.eval.m_bins,
                              stream(cfg.seed, STREAM_EVAL, 1))
    return {
        "accuracy_train_task": acc,
        "accuracy_probe": report.accuracy,
        "ece_probe": report.ece,
        "entropy_train_task": token_entropy(policy, rollouts),
    }


@dataclass
class RunResult:
    policy: PolicySnapshot
    records: list[dict]
    baseline: dict
    setup: Setup = field(repr=False)

    @property
    def final(self) -> dict:
        return self.records[-1]


def run_training(cfg: RunConfig, out_dir: str | Path | None = None, write: bool = True,
                 on_record: Callable[[dict], None] | None = None) -> RunResult:
    """Sample, score, compute advantages, mask and update for ``train.steps`` steps.

    With ``write`` the run directory receives ``config.txt``, ``probes.jsonl``,
    ``baseline.json``, ``metrics.jsonl`` and ``checkpoint.txt``.
    """
    setup = build_setup(cfg)
    div, surr = cfg.divergence_spec(), cfg.surrogate_spec()
    keep_full = div.estimator is Estimator.EXACT
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    metrics_fh = None
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(emit_config(cfg))
        save_table(setup.probes, out / "probes.jsonl")
        metrics_fh = open(out / "metrics.jsonl", "w")

    policy = setup.ref.frozen_copy()
    baseline = evaluate(policy, setup)
    if write:
        (out / "baseline.json").write_text(json.dumps(baseline, sort_keys=True) + "\n")
    records = []
    try:
        for step in range(cfg.train.steps):
            groups = sample_batch(policy, setup.ref, setup.task, cfg, step, keep_full)
            policy, report = train_step(policy, setup.ref, groups, div, surr, cfg.train.lr, debug=cfg.debug)
            record = report.as_dict()
            record.update(dict.fromkeys(EVAL_KEYS))
            if report.step % cfg.eval.eval_every == 0 or step == cfg.train.steps - 1:
                record.update(evaluate(policy, setup))
            records.append(record)
            if metrics_fh:
                metrics_fh.write(json.dumps(record) + "\n")
            if on_record:
                on_record(record)
    finally:
        if metrics_fh:
            metrics_fh.close()
    if write:
        save_checkpoint(policy, out / "checkpoint.txt")
    return RunResult(policy, records, baseline, setup)


# -- gradient check ---------------------------------------------------------------

@dataclass
class GradcheckResult:
    max_rel_error: float
    n_params: int
    passed: bool


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(cfg: RunConfig, n_params: int = 50, h: float = 1e-5, corrupt: bool = False,
              perturbation: float = 0.5) -> GradcheckResult:
    """Compare the analytic batch gradient with central finite differences.

    The policy is the reference plus Gaussian noise so the penalty gradient is
    not trivially zero. The penalty is always evaluated in exact mode: the
    sampled-token estimator is a score-function estimate, not the derivative
    of a fixed-batch objective, so finite differences cannot validate it.
    """
    cfg = copy.deepcopy(cfg)
    if cfg.divergence.estimator is not Estimator.EXACT:
        log.warning("gradcheck switches divergence.estimator to exact")
        cfg.divergence.estimator = Estimator.EXACT
    setup = build_setup(cfg)
    div, surr = cfg.divergence_spec(), cfg.surrogate_spec()
    rng = stream(cfg.seed, STREAM_GRADCHECK)
    base = setup.ref.logits + perturbation * rng.standard_normal(setup.ref.logits.shape)
    policy = PolicySnapshot(setup.ref.config, base)
    groups = sample_batch(policy, setup.ref, setup.task, cfg, 0, seed_stream=STREAM_GRADCHECK)
    analytic = batch_gradient(policy, setup.ref, groups, div, surr,
                              _coef_offset=0.1 if corrupt else 0.0).total

    rows = np.unique(np.concatenate([ro.contexts for g in groups for ro in g.rollouts]))
    candidates = [(int(r), v) for r in rows for v in range(base.shape[1])]
    picks = rng.choice(len(candidates), size=min(n_params, len(candidates)), replace=False)
    worst = 0.0
    for k in picks:
        r, v = candidates[k]
        plus, minus = base.copy(), base.copy()
        plus[r, v] += h
        minus[r, v] -= h
        f_plus = batch_objective(PolicySnapshot(policy.config, plus), setup.ref, groups, div, surr)
        f_minus = batch_objective(PolicySnapshot(policy.config, minus), setup.ref, groups, div, surr)
        numeric = (f_plus - f_minus) / (2 * h)
        worst = max(worst, relative_error(analytic[r, v], numeric))
    return GradcheckResult(worst, len(picks), worst <= GRADCHECK_TOL)


# -- alpha sweep -----------------------------------------------------------------

def dedupe_alphas(alphas: Sequence[float]) -> list[float]:
    if not alphas:
        raise ConfigError("alpha sweep needs at least one value")
    seen, out = set(), []
    for a in alphas:
        a = float(a)
        if not 0 < a < 1:
            raise ConfigError(f"alpha {a} outside (0, 1)")
        if a in seen:
            log.warning("duplicate alpha %r dropped from sweep", a)
            continue
        seen.add(a)
        out.append(a)
    return out


def sweep_alpha(cfg: RunConfig, alphas: Sequence[float], out_dir: str | Path | None = None) -> list[dict]:
    """One SRKL training run per alpha; writes ``summary.csv`` under ``out_dir``."""
    alphas = dedupe_alphas(alphas)
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    rows = []
    for a in alphas:
        run_cfg = copy.deepcopy(cfg)
        run_cfg.divergence.kind = DivergenceKind.SRKL
        run_cfg.divergence.alpha = a
        run_dir = out / f"alpha_{a!r}"
        run_cfg.out_dir = str(run_dir)
        final = run_training(run_cfg, run_dir).final
        rows.append({"alpha": a, "final_accuracy": final["accuracy_train_task"],
                     "final_ece": final["ece_probe"], "final_entropy": final["entropy_train_task"]})
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w") as fh:
        fh.write("alpha,final_accuracy,final_ece,final_entropy\n")
        for r in rows:
            fh.write(f"{r['alpha']!r},{r['final_accuracy']!r},{r['final_ece']!r},{r['final_entropy']!r}\n")
    return rows
