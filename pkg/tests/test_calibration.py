import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srkl_lab.calibration import (CalSample, bin_index, compute_ece, majority_vote, read_samples_jsonl,
                                  write_samples_jsonl)
from srkl_lab.errors import EmptyInput

from oracles import ece_brute_force


def random_sample_set(rng, n_questions=None, n_answers=None, alphabet="abcd"):
    n_questions = n_questions or int(rng.integers(1, 40))
    out = []
    for q in range(n_questions):
        n = n_answers or int(rng.integers(1, 12))
        answers = tuple(str(rng.choice(list(alphabet))) for _ in range(n))
        out.append(CalSample(q, answers, str(rng.choice(list(alphabet)))))
    return out


def as_pairs(samples):
    return [(s.answers, s.gold) for s in samples]


answer_sets = st.lists(
    st.tuples(st.lists(st.sampled_from(["a", "b", "c", " A", "b "]), min_size=1, max_size=10),
              st.sampled_from(["a", "b", "c"])),
    min_size=1, max_size=30,
).map(lambda xs: [CalSample(i, tuple(a), g) for i, (a, g) in enumerate(xs)])


class TestMajorityVote:
    def test_examples(self):
        assert majority_vote(["A", "A", "A", "B"]) == ("a", 0.75)
        assert majority_vote(["A"] * 4) == ("a", 1.0)
        assert majority_vote(["A", "B"]) == ("a", 0.5)
        assert majority_vote(["b", "a"]) == ("a", 0.5)

    def test_canonicalizes(self):
        assert majority_vote([" X", "x ", "y"]) == ("x", pytest.approx(2 / 3))

    def test_empty(self):
        with pytest.raises(EmptyInput):
            majority_vote([])
        with pytest.raises(EmptyInput):
            CalSample("q", (), "a")


class TestECE:
    def test_perfect(self):
        samples = [CalSample(i, ("7",) * 10, "7") for i in range(5)]
        rep = compute_ece(samples)
        assert rep.ece == 0.0 and rep.accuracy == 1.0

    def test_two_question_hand_example(self):
        samples = [CalSample("q1", ("a", "a", "a", "b"), "a"), CalSample("q2", ("a", "a", "a", "b"), "b")]
        rep = compute_ece(samples, m_bins=2)
        assert rep.ece == 0.25
        assert rep.bins[1].count == 2
        assert rep.bins[1].mean_confidence == 0.75 and rep.bins[1].mean_accuracy == 0.5
        assert rep.bins[0].count == 0

    def test_confident_wrong(self):
        rep = compute_ece([CalSample(i, ("1",) * 10, "2") for i in range(3)])
        assert rep.ece == 1.0

    def test_four_questions_spread(self):
        samples = [
            CalSample(0, ("a", "b", "c", "d"), "a"),         # conf 0.25, correct
            CalSample(1, ("a", "a", "b", "c"), "b"),         # conf 0.5, wrong
            CalSample(2, ("a", "a", "a", "b"), "a"),         # conf 0.75, correct
            CalSample(3, ("c", "c", "c", "c"), "d"),         # conf 1.0, wrong
        ]
        # M = 4: each in its own bin -> |1-.25| + |0-.5| + |1-.75| + |0-1| over 4
        rep = compute_ece(samples, m_bins=4)
        assert rep.ece == pytest.approx((0.75 + 0.5 + 0.25 + 1.0) / 4, abs=1e-15)
        assert rep.ece == pytest.approx(ece_brute_force(as_pairs(samples), 4), abs=1e-12)

    def test_right_inclusive_edges(self):
        # 0.5 sits on the edge of 2 bins: it belongs to the lower one
        assert list(bin_index(np.array([0.0, 0.1, 0.5, 0.50001, 1.0]), 2)) == [0, 0, 0, 1, 1]
        assert list(bin_index(np.array([0.1, 0.2, 0.3, 0.7, 0.9]), 10)) == [0, 1, 2, 6, 8]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            samples = random_sample_set(rng)
            m = int(rng.integers(1, 16))
            assert abs(compute_ece(samples, m).ece - ece_brute_force(as_pairs(samples), m)) <= 1e-12

    def test_empty(self):
        with pytest.raises(EmptyInput):
            compute_ece([])

    def test_bad_bins(self):
        with pytest.raises(ValueError):
            compute_ece([CalSample(0, ("a",), "a")], m_bins=0)

    @settings(max_examples=200, deadline=None)
    @given(answer_sets, st.integers(1, 12))
    def test_report_invariants(self, samples, m):
        rep = compute_ece(samples, m)
        assert 0.0 <= rep.ece <= 1.0
        assert sum(b.count for b in rep.bins) == rep.n_questions == len(samples)
        recomputed = sum(b.count / rep.n_questions * abs(b.mean_accuracy - b.mean_confidence) for b in rep.bins)
        assert rep.ece == pytest.approx(recomputed, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(answer_sets, st.integers(1, 12), st.randoms())
    def test_permutation_invariant(self, samples, m, rnd):
        shuffled = list(samples)
        rnd.shuffle(shuffled)
        assert compute_ece(shuffled, m) == compute_ece(samples, m)

    @settings(max_examples=200, deadline=None)
    @given(answer_sets)
    def test_single_bin_is_gap(self, samples):
        rep = compute_ece(samples, 1)
        assert rep.ece == pytest.approx(abs(rep.accuracy - rep.mean_confidence), abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(answer_sets, st.integers(1, 12))
    def test_duplication_invariant(self, samples, m):
        doubled = samples + [CalSample(f"dup{s.question_id}", s.answers, s.gold) for s in samples]
        assert compute_ece(doubled, m).ece == pytest.approx(compute_ece(samples, m).ece, abs=1e-12)


class TestIO:
    def test_jsonl_round_trip(self, tmp_path):
        samples = random_sample_set(np.random.default_rng(1), 10)
        path = tmp_path / "s.jsonl"
        write_samples_jsonl(samples, path)
        back = read_samples_jsonl(path)
        assert back == samples

    def test_reliability_csv(self, tmp_path):
        rep = compute_ece(random_sample_set(np.random.default_rng(2), 20), 5)
        rep.write_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "bin_lower,bin_upper,count,mean_confidence,mean_accuracy"
        assert len(lines) == 6
        assert sum(int(line.split(",")[2]) for line in lines[1:]) == 20
