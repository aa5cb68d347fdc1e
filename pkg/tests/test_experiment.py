import json
import logging

import pytest

from srkl_lab.config import RunConfig
from srkl_lab.divergence import DivergenceKind
from srkl_lab.errors import ConfigError
from srkl_lab.experiment import EVAL_KEYS, dedupe_alphas, gradcheck, run_training, sweep_alpha


def small(steps=4, kind=DivergenceKind.SRKL, seed=0):
    cfg = RunConfig(seed=seed)
    cfg.train.steps = steps
    cfg.eval.eval_every = 2
    cfg.task.n_probes = 50
    cfg.divergence.kind = kind
    return cfg


def test_run_directory(tmp_path):
    res = run_training(small(), tmp_path)
    for name in ("config.txt", "metrics.jsonl", "checkpoint.txt", "probes.jsonl", "baseline.json"):
        assert (tmp_path / name).exists()
    lines = [json.loads(x) for x in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert [r["step"] for r in lines] == [1, 2, 3, 4]
    assert lines == res.records
    for r in lines:
        has_eval = r["step"] % 2 == 0
        assert all((r[k] is not None) == has_eval for k in EVAL_KEYS)
    assert set(json.loads((tmp_path / "baseline.json").read_text())) == set(EVAL_KEYS)


def test_final_step_always_evaluated():
    cfg = small(steps=3)
    assert run_training(cfg, write=False).final["ece_probe"] is not None


def test_deterministic_metrics(tmp_path):
    run_training(small(), tmp_path / "a")
    run_training(small(), tmp_path / "b")
    a = (tmp_path / "a" / "metrics.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "metrics.jsonl").read_bytes()
    assert (tmp_path / "a" / "checkpoint.txt").read_bytes() == (tmp_path / "b" / "checkpoint.txt").read_bytes()


def test_seed_changes_run():
    a = run_training(small(seed=0), write=False).records
    b = run_training(small(seed=1), write=False).records
    assert a != b


def test_zero_beta_equals_no_penalty():
    cfg = small(kind=DivergenceKind.RKL)
    cfg.divergence.beta = 0.0
    a = run_training(cfg, write=False)
    b = run_training(small(kind=DivergenceKind.NONE), write=False)
    drop = ("penalty_term",)
    assert [{k: v for k, v in r.items() if k not in drop} for r in a.records] == \
           [{k: v for k, v in r.items() if k not in drop} for r in b.records]
    assert (a.policy.logits == b.policy.logits).all()


@pytest.mark.parametrize("kind", list(DivergenceKind))
def test_gradcheck_passes(kind):
    res = gradcheck(small(kind=kind), n_params=30)
    assert res.passed and res.n_params == 30


def test_gradcheck_detects_corruption():
    assert not gradcheck(small(), n_params=30, corrupt=True).passed


def test_dedupe_alphas(caplog):
    with caplog.at_level(logging.WARNING):
        assert dedupe_alphas([0.4, 0.8, 0.4]) == [0.4, 0.8]
    assert "duplicate" in caplog.text
    with pytest.raises(ConfigError):
        dedupe_alphas([])
    with pytest.raises(ConfigError):
        dedupe_alphas([1.0])


def test_sweep_alpha(tmp_path):
    rows = sweep_alpha(small(steps=2), [0.5, 0.9], tmp_path)
    assert [r["alpha"] for r in rows] == [0.5, 0.9]
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == "alpha,final_accuracy,final_ece,final_entropy" and len(lines) == 3
    assert (tmp_path / "alpha_0.5" / "metrics.jsonl").exists()
