import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srkl_lab.divergence import srkl_coefficient
from srkl_lab.errors import DomainError, OutOfRange
from srkl_lab.fixed_point import (RegularizedProblem, invert_coefficient, invert_log_ratio,
                                  rkl_tilted_policy, solve_optimal_policy, total_variation)

from generators import random_problem
from oracles import coefficient_mp, softmax


class TestInvert:
    def test_examples(self):
        assert invert_coefficient(0.8, 0.2) == pytest.approx(1.0, abs=1e-12)
        r = invert_coefficient(0.8, 0.22)
        assert r > 1
        assert abs(float(coefficient_mp(0.8, r)) - 0.22) < 1e-10
        with pytest.raises(OutOfRange):
            invert_coefficient(0.8, math.log(1.25))
        with pytest.raises(OutOfRange):
            invert_coefficient(0.8, 1.0)

    def test_alpha_domain(self):
        with pytest.raises(DomainError):
            invert_coefficient(1.0, 0.0)

    @settings(max_examples=500, deadline=None)
    @given(st.floats(0.01, 0.99), st.floats(-60.0, 0.999999))
    def test_round_trip(self, alpha, frac):
        # targets from far below up to just under the cap
        cap = -math.log(alpha)
        target = cap * frac if frac > 0 else frac
        s = invert_log_ratio(alpha, target)[0]
        assert abs(float(srkl_coefficient(alpha, math.exp(s))) - target) <= 1e-10 * max(1.0, abs(target))

    def test_vectorized(self):
        t = np.array([-5.0, 0.0, 0.2, 0.223])
        s = invert_log_ratio(0.8, t)
        assert np.allclose(srkl_coefficient(0.8, np.exp(s)), t, atol=1e-10)
        assert np.all(np.diff(s) > 0)


class TestSolve:
    def test_equal_q(self):
        prob = RegularizedProblem(np.full(4, 2.0), np.array([0.1, 0.2, 0.3, 0.4]), 0.5, 0.8)
        sol = solve_optimal_policy(prob)
        assert np.allclose(sol.ratios, 1.0, atol=1e-12)
        assert np.allclose(sol.policy, prob.p_ref, atol=1e-12)
        assert sol.lambda_star == pytest.approx(2.0 - 0.5 * 0.2, abs=1e-12)

    def test_tilt_limit_two_actions(self):
        prob = RegularizedProblem(np.array([1.0, 0.0]), np.array([0.5, 0.5]), 1.0, 1e-6)
        sol = solve_optimal_policy(prob)
        e = math.e
        assert total_variation(sol.policy, [e / (e + 1), 1 / (e + 1)]) < 1e-3

    def test_monotone_three_actions(self):
        for alpha in (0.05, 0.5, 0.95):
            for beta in (0.01, 1.0, 100.0):
                sol = solve_optimal_policy(RegularizedProblem(np.array([2.0, 1.0, 0.0]), np.full(3, 1 / 3), beta, alpha))
                assert sol.ratios[0] > sol.ratios[1] > sol.ratios[2]

    def test_single_action(self):
        sol = solve_optimal_policy(RegularizedProblem(np.array([3.0]), np.array([1.0]), 1.0, 0.5))
        assert sol.policy[0] == pytest.approx(1.0) and sol.residual <= 1e-9

    def test_random_problems(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            prob = random_problem(rng)
            sol = solve_optimal_policy(prob)
            assert sol.foc_residual(prob) <= 1e-8
            assert sol.residual <= 1e-9
            assert np.all(np.isfinite(sol.log_ratios)) and np.all(sol.policy >= 0)
            # softly bounded upward deviations
            assert np.all(prob.q_values - sol.lambda_star <= prob.beta * math.log(1 / prob.alpha) + 1e-8)
            order = np.argsort(prob.q_values)
            assert np.all(np.diff(sol.log_ratios[order]) > 0)

    def test_local_optimality(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            prob = random_problem(rng, max_actions=8)
            if prob.p_ref.size < 2:
                continue
            sol = solve_optimal_policy(prob)
            best = prob.objective(sol.policy)
            for _ in range(1000):
                # perturb in log space and renormalize: stays on the simplex interior
                z = np.log(prob.p_ref) + sol.log_ratios + rng.normal(0, 1e-3, sol.policy.size)
                cand = np.exp(z - z.max())
                cand /= cand.sum()
                assert prob.objective(cand) <= best + 1e-12

    def test_alpha_to_zero_converges_to_tilt(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            base = random_problem(rng)
            tilt = rkl_tilted_policy(base.q_values, base.p_ref, base.beta)
            tv = [total_variation(solve_optimal_policy(
                RegularizedProblem(base.q_values, base.p_ref, base.beta, 10.0 ** -k)).policy, tilt)
                for k in range(2, 7)]
            assert all(b <= a + 1e-12 for a, b in zip(tv, tv[1:]))
            assert tv[-1] < 1e-3

    def test_json(self):
        prob = RegularizedProblem.from_dict(json.loads('{"q_values": [1, 0], "p_ref": [0.5, 0.5], "beta": 1, "alpha": 0.8}'))
        d = solve_optimal_policy(prob).as_dict()
        assert set(d) == {"lambda", "ratios", "policy", "residual"}
        json.dumps(d)

    @pytest.mark.parametrize("bad", [
        dict(q_values=[1, 0], p_ref=[0.5, 0.6], beta=1, alpha=0.5),
        dict(q_values=[1, 0], p_ref=[1.0, 0.0], beta=1, alpha=0.5),
        dict(q_values=[1, 0], p_ref=[0.5, 0.5], beta=0, alpha=0.5),
        dict(q_values=[1, 0], p_ref=[0.5, 0.5], beta=1, alpha=1.0),
        dict(q_values=[1, 0, 2], p_ref=[0.5, 0.5], beta=1, alpha=0.5),
    ])
    def test_invalid_problem(self, bad):
        with pytest.raises(DomainError):
            RegularizedProblem.from_dict(bad)


class TestTilt:
    def test_examples(self):
        assert np.allclose(rkl_tilted_policy([1, 0], [0.5, 0.5], 1.0), [0.7311, 0.2689], atol=1e-4)
        assert np.allclose(rkl_tilted_policy([1, 0], [0.5, 0.5], 1.0), softmax([1.0, 0.0]), atol=1e-15)
        p = np.array([0.2, 0.3, 0.5])
        assert total_variation(rkl_tilted_policy([5, -3, 1], p, 1e6), p) < 1e-3

    def test_overflow_guard(self):
        out = rkl_tilted_policy([1000.0, 0.0], [0.5, 0.5], 1e-3)
        assert np.all(np.isfinite(out)) and out[0] == pytest.approx(1.0)

    def test_beta_domain(self):
        with pytest.raises(DomainError):
            rkl_tilted_policy([1, 0], [0.5, 0.5], 0.0)
