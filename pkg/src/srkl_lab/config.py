"""Run configuration in a flat ``section.key = value`` text format.

Example::

    # comments and blank lines are ignored
    seed = 3
    divergence.kind = srkl
    divergence.alpha = 0.8
    train.steps = 500
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .divergence import DivergenceKind, DivergenceSpec, Estimator
from .errors import ConfigError
from .policy import PolicyConfig
from .rft import MaskMode, SurrogateKind, SurrogateSpec
from .tasks import TaskKind


@dataclass
class ModelSection:
    vocab_size: int = 16
    context_order: int = 2
    max_len: int = 1
    eos_token: int = 15


@dataclass
class DivergenceSection:
    kind: DivergenceKind = DivergenceKind.SRKL
    alpha: float = 0.8
    beta: float = 0.04
    estimator: Estimator = Estimator.EXACT


@dataclass
class SurrogateSection:
    kind: SurrogateKind = SurrogateKind.GRPO_TOKEN
    clip_eps: float = 0.2
    clip_eps_high: typing.Optional[float] = None
    mask_mode: MaskMode = MaskMode.FULL


@dataclass
class TrainSection:
    group_size: int = 8
    prompts_per_step: int = 16
    lr: float = 10.0
    steps: int = 500


@dataclass
class EvalSection:
    n_samples: int = 10
    m_bins: int = 10
    eval_every: int = 100


@dataclass
class TaskSection:
    kind: TaskKind = TaskKind.MODULAR_SUM
    num_operands: int = 2
    n_probes: int = 500
    ref_bias: float = 1.0
    ref_noise: float = 1.0


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    divergence: DivergenceSection = field(default_factory=DivergenceSection)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    task: TaskSection = field(default_factory=TaskSection)
    seed: int = 0
    out_dir: str = "runs/default"
    debug: bool = False

    def validate(self) -> "RunConfig":
        """Raise ``ConfigError`` on any invalid field; returns self."""
        try:
            self.policy_config()
            self.divergence_spec()
            self.surrogate_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        t, e = self.train, self.eval
        if t.group_size < 2:
            raise ConfigError("train.group_size must be at least 2")
        if t.steps < 1:
            raise ConfigError("train.steps must be at least 1")
        if t.prompts_per_step < 1:
            raise ConfigError("train.prompts_per_step must be at least 1")
        if not t.lr > 0:
            raise ConfigError("train.lr must be positive")
        if e.n_samples < 1 or e.m_bins < 1 or e.eval_every < 1:
            raise ConfigError("eval.n_samples, eval.m_bins and eval.eval_every must be positive")
        if self.task.kind is not TaskKind.MODULAR_SUM:
            raise ConfigError("training runs use task.kind = modular_sum; probes are built from it")
        m = self.model
        if m.vocab_size < 12:
            raise ConfigError("model.vocab_size must be at least 12 for the synthetic tasks")
        n_markers = sum(1 for t in range(10, m.vocab_size) if t != m.eos_token)
        available = n_markers * 10 ** self.task.num_operands
        if not 1 <= self.task.n_probes <= available:
            raise ConfigError(f"task.n_probes must lie in [1, {available}] for this vocabulary")
        return self

    def policy_config(self) -> PolicyConfig:
        m = self.model
        return PolicyConfig(m.vocab_size, m.context_order, m.max_len, m.eos_token)

    def divergence_spec(self) -> DivergenceSpec:
        d = self.divergence
        return DivergenceSpec(d.kind, d.alpha, d.beta, d.estimator)

    def surrogate_spec(self) -> SurrogateSpec:
        s = self.surrogate
        return SurrogateSpec(s.kind, s.clip_eps, s.clip_eps_high, s.mask_mode)


_SECTIONS = ("model", "divergence", "surrogate", "train", "eval", "task")


def _convert(raw: str, tp, key: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if raw.lower() in ("none", "null", ""):
            return None
        return _convert(raw, args[0], key)
    try:
        if tp is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(tp, type) and issubclass(tp, Enum):
            return tp(raw.lower())
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def set_value(cfg: RunConfig, key: str, raw: str) -> None:
    parts = key.strip().split(".")
    if len(parts) == 1:
        target, name = cfg, parts[0]
    elif len(parts) == 2 and parts[0] in _SECTIONS:
        target, name = getattr(cfg, parts[0]), parts[1]
    else:
        raise ConfigError(f"unknown config key {key!r}")
    hints = typing.get_type_hints(type(target))
    if name not in hints or name in _SECTIONS:
        raise ConfigError(f"unknown config key {key!r}")
    setattr(target, name, _convert(raw.strip(), hints[name], key))


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = line.split("=", 1)
        set_value(cfg, key, raw)
    return cfg


def _fmt(value) -> str:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(value)


def emit_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            for sub in dataclasses.fields(value):
                lines.append(f"{f.name}.{sub.name} = {_fmt(getattr(value, sub.name))}")
        else:
            lines.append(f"{f.name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def load_config(path=None, overrides: typing.Sequence[str] = ()) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        cfg = parse_config(Path(path).read_text(), cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        set_value(cfg, key, raw)
    return cfg
