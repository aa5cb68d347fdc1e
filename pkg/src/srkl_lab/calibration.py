"""Majority-vote confidence and expected calibration error.

Each question contributes one record: the majority answer over its sampled
answers, that answer's vote share as confidence, and whether it matches the
gold answer. Records are binned into ``M`` equal-width bins over ``[0, 1]``;
bin ``m`` covers ``((m - 1) / M, m / M]`` and a confidence of exactly 0 goes
to the first bin.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import EmptyInput


def canonical(answer) -> str:
    return str(answer).strip().lower()


def majority_vote(answers: Sequence) -> tuple[str, float]:
    """Modal canonical answer and its vote share; ties go to the smallest string."""
    if len(answers) == 0:
        raise EmptyInput("majority vote over no answers")
    counts = Counter(canonical(a) for a in answers)
    top = max(counts.values())
    winner = min(a for a, c in counts.items() if c == top)
    return winner, top / len(answers)


@dataclass(frozen=True)
class CalSample:
    question_id: Hashable
    answers: tuple
    gold: str

    def __post_init__(self):
        if len(self.answers) < 1:
            raise EmptyInput("a calibration sample needs at least one answer")
        object.__setattr__(self, "answers", tuple(self.answers))


@dataclass(frozen=True)
class BinStats:
    lower: float
    upper: float
    count: int
    mean_confidence: float
    mean_accuracy: float


@dataclass(frozen=True)
class CalibrationReport:
    bins: tuple[BinStats, ...]
    ece: float
    n_questions: int
    accuracy: float
    mean_confidence: float

    def csv_lines(self):
        yield "bin_lower,bin_upper,count,mean_confidence,mean_accuracy"
        for b in self.bins:
            yield f"{b.lower!r},{b.upper!r},{b.count},{b.mean_confidence!r},{b.mean_accuracy!r}"

    def write_csv(self, path) -> None:
        Path(path).write_text("\n".join(self.csv_lines()) + "\n")


def bin_index(confidence: np.ndarray, m_bins: int) -> np.ndarray:
    # edges m / M are the same doubles as any vote share k / N equal to them
    edges = np.arange(m_bins + 1) / m_bins
    idx = np.searchsorted(edges, confidence, side="left") - 1
    return np.clip(idx, 0, m_bins - 1)


def ece_from_records(confidence, correct, m_bins: int = 10) -> CalibrationReport:
    conf = np.asarray(confidence, dtype=float)
    corr = np.asarray(correct, dtype=float)
    n = conf.size
    if n == 0:
        raise EmptyInput("no records to calibrate")
    if m_bins < 1:
        raise ValueError("m_bins must be positive")
    idx = bin_index(conf, m_bins)
    counts = np.bincount(idx, minlength=m_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=m_bins)
    acc_sum = np.bincount(idx, weights=corr, minlength=m_bins)
    bins = []
    ece = 0.0
    for m in range(m_bins):
        c = int(counts[m])
        mc = conf_sum[m] / c if c else 0.0
        ma = acc_sum[m] / c if c else 0.0
        bins.append(BinStats(m / m_bins, (m + 1) / m_bins, c, float(mc), float(ma)))
        ece += (c / n) * abs(ma - mc)
    return CalibrationReport(tuple(bins), float(ece), n, float(corr.mean()), float(conf.mean()))


def compute_ece(samples: Iterable[CalSample], m_bins: int = 10) -> CalibrationReport:
    # sorting makes the floating-point reduction independent of input order
    records = []
    for s in samples:
        answer, conf = majority_vote(s.answers)
        records.append((conf, float(answer == canonical(s.gold))))
    records.sort()
    if not records:
        raise EmptyInput("no samples to calibrate")
    conf, correct = zip(*records)
    return ece_from_records(conf, correct, m_bins)


def read_samples_jsonl(path) -> list[CalSample]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(CalSample(d["question_id"], tuple(d["answers"]), d["gold"]))
    return out


def write_samples_jsonl(samples: Iterable[CalSample], path) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps({"question_id": s.question_id, "answers": list(s.answers), "gold": s.gold}) + "\n")
