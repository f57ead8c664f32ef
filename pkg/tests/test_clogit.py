import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from metropath.clogit import (
    NonIdentifiableWarning,
    SeparationError,
    fit_fractional_logit,
    gradient,
    log_likelihood,
    shares_from_beta,
)
from metropath.synthgen import SYNTHETIC_BETA

from oracles import softmax_shares


def random_design(rng, n_groups=12, max_paths=4, k=4):
    sizes = rng.integers(2, max_paths + 1, size=n_groups)
    ptr = np.concatenate([[0], np.cumsum(sizes)])
    design = rng.normal(size=(ptr[-1], k)) * np.array([5.0, 1.0, 0.5, 1.5])[:k]
    return design, ptr


def test_single_path_share_is_one():
    assert shares_from_beta([-1.0, -2.0], np.array([[3.0, 1.0]]), np.array([0, 1])).tolist() == [1.0]


def test_zero_beta_is_uniform():
    design = np.array([[10.0, 0, 0.3, -6.0], [14.0, 1, 0.8, -6.5]])
    assert shares_from_beta(np.zeros(4), design, np.array([0, 2])).tolist() == [0.5, 0.5]


def test_synthetic_beta_against_direct_softmax():
    rows = [[12.0, 0.0, 0.4, -6.9], [9.5, 1.0, 1.1, -6.2], [15.0, 1.0, 0.2, -5.8]]
    got = shares_from_beta(SYNTHETIC_BETA, np.array(rows), np.array([0, 3]))
    assert got == pytest.approx(softmax_shares(SYNTHETIC_BETA, rows), abs=1e-15)


def test_extreme_utilities_do_not_overflow():
    design = np.array([[1e4, 0], [0, 0]])
    p = shares_from_beta([1.0, 0.0], design, np.array([0, 2]))
    assert p.tolist() == [1.0, 0.0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), arrays(float, 4, elements=st.floats(-100, 100)))
def test_translation_invariance(seed, offset):
    rng = np.random.default_rng(seed)
    design, ptr = random_design(rng, n_groups=5)
    beta = rng.uniform(-1, 0, size=4)
    shifted = design.copy()
    # adding a group-constant attribute row shifts every utility of the group equally
    g = int(rng.integers(0, 5))
    shifted[ptr[g] : ptr[g + 1]] += offset
    assert np.allclose(shares_from_beta(beta, design, ptr), shares_from_beta(beta, shifted, ptr), atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    design, ptr = random_design(rng, n_groups=6)
    beta = rng.uniform(-1, 0.2, size=4)
    p = shares_from_beta(rng.uniform(-1, 0, size=4), design, ptr)
    w = rng.uniform(0.5, 20, size=len(ptr) - 1)
    g = gradient(beta, p, w, design, ptr)
    h = 1e-6
    fd = np.array([
        (log_likelihood(beta + h * e, p, w, design, ptr) - log_likelihood(beta - h * e, p, w, design, ptr)) / (2 * h)
        for e in np.eye(4)
    ])
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(g).max()))


@pytest.mark.parametrize("seed", range(5))
def test_exact_shares_round_trip(seed):
    rng = np.random.default_rng(seed)
    design, ptr = random_design(rng)
    beta = rng.uniform([-2, -4, -6, -10], 0)
    p = shares_from_beta(beta, design, ptr)
    fit = fit_fractional_logit(p, rng.uniform(1, 50, size=len(ptr) - 1), design, ptr)
    assert fit.converged and fit.identifiable
    assert np.max(np.abs(fit.beta - beta)) <= 1e-4


def test_all_single_path_returns_init():
    design = np.arange(12.0).reshape(3, 4)
    ptr = np.arange(4)
    init = np.array([-0.1, -0.2, -0.3, -0.4])
    with pytest.warns(NonIdentifiableWarning):
        fit = fit_fractional_logit(np.ones(3), np.ones(3), design, ptr, beta_init=init)
    assert np.array_equal(fit.beta, init) and not fit.identifiable


def test_symmetric_od_is_carried_by_the_others():
    rng = np.random.default_rng(3)
    design, ptr = random_design(rng)
    beta = np.array([-0.2, -0.5, -1.0, -3.0])
    p = shares_from_beta(beta, design, ptr)
    w = np.ones(len(ptr) - 1)
    # append an OD whose two paths are identical, with uniform shares
    sym = np.vstack([design, [[7.0, 1.0, 0.3, -5.0]] * 2])
    ptr2 = np.append(ptr, ptr[-1] + 2)
    fit = fit_fractional_logit(np.append(p, [0.5, 0.5]), np.append(w, 100.0), sym, ptr2)
    assert np.max(np.abs(fit.beta - beta)) <= 1e-4


def test_duplicated_term_equals_doubled_weight():
    rng = np.random.default_rng(8)
    design, ptr = random_design(rng, n_groups=6)
    p = shares_from_beta([-0.3, -0.4, -1.0, -2.0], design, ptr)
    # perturb so the fit is not exact
    p = p * rng.uniform(0.8, 1.2, size=len(p))
    p = p / np.repeat(np.add.reduceat(p, ptr[:-1]), np.diff(ptr))
    w = rng.uniform(1, 5, size=6)
    s0, s1 = ptr[0], ptr[1]
    dup_design = np.vstack([design, design[s0:s1]])
    dup_ptr = np.append(ptr, ptr[-1] + (s1 - s0))
    a = fit_fractional_logit(np.append(p, p[s0:s1]), np.append(w, w[0]), dup_design, dup_ptr)
    w2 = w.copy()
    w2[0] *= 2
    b = fit_fractional_logit(p, w2, design, ptr)
    assert np.allclose(a.beta, b.beta, atol=1e-7)


def test_separable_shares_raise():
    design = np.array([[1.0], [0.0], [2.0], [0.0]])
    ptr = np.array([0, 2, 4])
    with pytest.raises(SeparationError) as err:
        fit_fractional_logit(np.array([1.0, 0.0, 1.0, 0.0]), np.ones(2), design, ptr)
    assert err.value.direction[0] > 0


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        fit_fractional_logit(np.array([0.5, 0.5]), np.array([-1.0]), np.eye(2), np.array([0, 2]))
