"""Independent reference implementations used as test oracles.

Written from the defining formulas with plain loops or mpmath; none of them
import the package code they check.
"""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction

import mpmath

mpmath.mp.dps = 50


def coefficient_mp(alpha, r):
    """Skew reverse KL gradient coefficient at 50 digits."""
    a, r = mpmath.mpf(alpha), mpmath.mpf(r)
    d = a * r + 1 - a
    return mpmath.log(r / d) + 1 - a * r / d


def rkl_sum(p, q):
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0:
            total += pi * math.log(pi / qi)
    return total


def srkl_sum(p, q, alpha):
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0:
            total += pi * math.log(pi / (alpha * pi + (1 - alpha) * qi))
    return total


def entropy_sum(p):
    return -sum(x * math.log(x) for x in p if x > 0)


def ece_brute_force(samples, m_bins):
    """ECE by explicit loops with exact rational bin membership.

    ``samples`` is a list of ``(answers, gold)``. A confidence c sits in bin m
    (1-based) when (m-1)/M < c <= m/M, with c = 0 in bin 1.
    """
    records = []
    for answers, gold in samples:
        canon = [str(a).strip().lower() for a in answers]
        counts = Counter(canon)
        top = max(counts.values())
        winner = sorted(a for a in counts if counts[a] == top)[0]
        conf = Fraction(top, len(canon))
        records.append((conf, winner == str(gold).strip().lower()))
    n = len(records)
    total = 0.0
    for m in range(1, m_bins + 1):
        lo, hi = Fraction(m - 1, m_bins), Fraction(m, m_bins)
        members = [(c, ok) for c, ok in records if (lo < c <= hi) or (m == 1 and c == 0)]
        if not members:
            continue
        conf = sum(float(c) for c, _ in members) / len(members)
        acc = sum(1.0 for _, ok in members if ok) / len(members)
        total += len(members) / n * abs(acc - conf)
    return total


def softmax(z):
    m = max(z)
    e = [math.exp(x - m) for x in z]
    s = sum(e)
    return [x / s for x in e]
