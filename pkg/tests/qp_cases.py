"""Random small share QPs whose ALC constraints are feasible by construction."""

import numpy as np

from metropath.alc import construct_alc
from metropath.clogit import shares_from_beta
from metropath.domain import ChoiceIndex
from metropath.qp import assemble_qp
from metropath.synthgen import BETA_LOWER, BETA_UPPER


def random_qp(rng: np.random.Generator, max_vars: int = 8):
    """Assembled problem with at most ``max_vars`` shares and a strictly convex objective."""
    while True:
        sizes = rng.integers(1, 4, size=int(rng.integers(1, 4)))
        if 2 <= sizes.sum() <= max_vars:
            break
    idx = ChoiceIndex([(f"o{g}", "d") for g in range(len(sizes))], sizes, 1)
    n, n_exit = idx.n_vars, 3
    # small integer attributes make coincidences, hence equalities, likely
    design = rng.integers(0, 3, size=(n, 4)).astype(float)
    cs = construct_alc(design, idx, BETA_LOWER, BETA_UPPER, samples=30, seed=int(rng.integers(1 << 30)))
    mu = rng.dirichlet(np.ones(n_exit), size=n)
    q = rng.integers(0, 60, size=idx.n_groups).astype(float)
    p_true = shares_from_beta(rng.uniform(BETA_LOWER, BETA_UPPER), design, idx.group_ptr)
    flows = q[:, None] * idx.group_sums(p_true[:, None] * mu)
    observed = np.maximum(flows + rng.normal(scale=3.0, size=flows.shape), 0.0)
    prior = shares_from_beta(rng.uniform(BETA_LOWER, BETA_UPPER), design, idx.group_ptr)
    problem = assemble_qp(idx, q, mu, observed, cs, w1=1.0, w2=float(rng.uniform(0.05, 50.0)), prior=prior)
    return problem
