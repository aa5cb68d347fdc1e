"""Random inputs shared by unit and acceptance tests."""

import numpy as np

from srkl_lab.fixed_point import RegularizedProblem


def random_problem(rng, max_actions=16, distinct=True, min_ref=1e-12):
    n = int(rng.integers(1, max_actions + 1))
    q = rng.normal(0.0, rng.choice([0.1, 1.0, 5.0]), n)
    if distinct:
        while len(set(q)) < n:
            q = rng.normal(0.0, 1.0, n)
    p = rng.dirichlet(np.full(n, rng.choice([0.3, 1.0, 5.0])))
    p = np.maximum(p, min_ref)
    p /= p.sum()
    beta = float(np.exp(rng.uniform(np.log(1e-2), np.log(10.0))))
    alpha = float(rng.uniform(0.01, 0.99))
    return RegularizedProblem(q, p, beta, alpha)
