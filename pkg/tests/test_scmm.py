"""Objective, marginal gains, forward greedy and the exhaustive oracle."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diffgreedy.errors import ContractViolation, DomainError, OracleLimitError
from diffgreedy.scmm import (
    MASK_VALUE,
    Membership,
    brute_force_best,
    forward_greedy,
    marginal_gains,
    scmm_value,
    set_value,
)


def sel(indices, D):
    return Membership.from_indices(indices, D)


# --------------------------------------------------------------------------
# scmm_value


def test_value_zero_column():
    assert scmm_value(np.array([1.0, 1.0]), np.zeros((2, 1)), sel([0], 1)) == 0.0


def test_value_single_feature_is_one():
    H = np.array([[math.e - 1.0]])
    assert scmm_value(np.array([1.0]), H, sel([0], 1)) == pytest.approx(1.0, abs=1e-15)


def test_value_two_features_two_columns():
    H = np.array([[1.0, 1.0], [3.0, 0.0]])
    got = scmm_value(np.array([2.0, 1.0]), H, sel([0, 1], 2))
    assert got == pytest.approx(2 * math.log(3) + math.log(4), abs=1e-12)
    assert got == pytest.approx(3.5835, abs=1e-4)


def test_value_empty_set_is_zero():
    H = np.ones((3, 4))
    assert scmm_value(np.ones(3), H, Membership.empty(4)) == 0.0


def test_value_dimension_mismatch():
    with pytest.raises(ContractViolation):
        scmm_value(np.ones(2), np.ones((3, 4)), Membership.empty(4))
    with pytest.raises(ContractViolation):
        scmm_value(np.ones(3), np.ones((3, 4)), Membership.empty(5))


@pytest.mark.parametrize(
    "alpha,H",
    [
        (np.array([-1.0]), np.ones((1, 2))),
        (np.array([1.0]), np.array([[1.0, -0.5]])),
        (np.array([np.nan]), np.ones((1, 2))),
    ],
)
def test_value_domain_errors(alpha, H):
    with pytest.raises(DomainError):
        scmm_value(alpha, H, Membership.empty(2))


def test_membership_invariants():
    with pytest.raises(ContractViolation):
        Membership(np.array([0.5, 1.2]), ()).validate()
    with pytest.raises(ContractViolation):
        Membership(np.array([0.5, 1.0]), (1, 1)).validate()
    with pytest.raises(ContractViolation):
        Membership(np.array([0.5, 0.9]), (1,)).validate()
    Membership(np.array([0.5, 1.0]), (1,)).validate()


# --------------------------------------------------------------------------
# marginal gains


def test_gain_from_empty():
    H = np.array([[1.0, 1.0]])
    g = marginal_gains(np.array([1.0]), H, Membership.empty(2))
    assert g[1] == pytest.approx(math.log(2), abs=1e-15)


def test_gain_after_selection_diminishes_and_masks():
    H = np.array([[1.0, 1.0]])
    g = marginal_gains(np.array([1.0]), H, sel([0], 2))
    assert g[1] == pytest.approx(math.log(3) - math.log(2), abs=1e-15)
    assert g[0] == MASK_VALUE


def test_gain_of_zero_column_is_zero():
    rng = np.random.default_rng(0)
    H = rng.uniform(size=(4, 5))
    H[:, 2] = 0.0
    for chosen in ([], [0], [1, 3]):
        assert marginal_gains(rng.uniform(size=4), H, sel(chosen, 5))[2] == 0.0


def test_gain_is_value_difference_for_soft_membership():
    rng = np.random.default_rng(3)
    alpha, H = rng.uniform(size=3), rng.exponential(size=(3, 6))
    m = Membership(rng.uniform(size=6), ())
    g = marginal_gains(alpha, H, m)
    for d in range(6):
        up = m.m.copy()
        up[d] = 1.0
        ref = scmm_value(alpha, H, Membership(up, ())) - scmm_value(alpha, H, m)
        assert g[d] == pytest.approx(ref, rel=1e-10, abs=1e-13)


# --------------------------------------------------------------------------
# property tests

nonneg = st.floats(0.0, 10.0, allow_nan=False, allow_infinity=False)


@st.composite
def objectives(draw, max_d=8, max_f=5):
    D = draw(st.integers(2, max_d))
    F = draw(st.integers(1, max_f))
    alpha = draw(arrays(np.float64, F, elements=nonneg))
    H = draw(arrays(np.float64, (F, D), elements=nonneg))
    return alpha, H


@settings(max_examples=300, deadline=None)
@given(objectives(), st.data())
def test_submodularity(obj, data):
    alpha, H = obj
    D = H.shape[1]
    v = data.draw(st.integers(0, D - 1))
    rest = [d for d in range(D) if d != v]
    B = data.draw(st.lists(st.sampled_from(rest), unique=True)) if rest else []
    A = data.draw(st.lists(st.sampled_from(B), unique=True)) if B else []
    gA = marginal_gains(alpha, H, sel(A, D))[v]
    gB = marginal_gains(alpha, H, sel(B, D))[v]
    assert gA - gB >= -1e-9


@settings(max_examples=200, deadline=None)
@given(objectives(), st.data())
def test_monotonicity(obj, data):
    alpha, H = obj
    D = H.shape[1]
    A = data.draw(st.lists(st.integers(0, D - 1), unique=True, max_size=D - 1))
    g = marginal_gains(alpha, H, sel(A, D))
    free = np.setdiff1d(np.arange(D), A)
    assert np.all(g[free] >= -1e-12)


@settings(max_examples=300, deadline=None)
@given(
    arrays(np.float64, 6, elements=nonneg),
    st.lists(st.integers(0, 5), unique=True),
    st.lists(st.integers(0, 5), unique=True),
    st.floats(0.0, 10.0),
)
def test_concave_of_modular_has_diminishing_returns(weights, a, extra, wv):
    # scalar concave g composed with a modular set function m
    g = math.log1p
    A = set(a)
    B = A | set(extra)
    mA, mB = weights[list(A)].sum(), weights[list(B)].sum()
    assert g(mA + wv) - g(mA) >= g(mB + wv) - g(mB) - 1e-12


@settings(max_examples=200, deadline=None)
@given(objectives(), st.data())
def test_soft_value_matches_set_value_on_binary(obj, data):
    alpha, H = obj
    D = H.shape[1]
    A = data.draw(st.lists(st.integers(0, D - 1), unique=True))
    assert scmm_value(alpha, H, sel(A, D)) == pytest.approx(set_value(alpha, H, A), rel=1e-12, abs=1e-12)


# --------------------------------------------------------------------------
# forward greedy


def test_greedy_prefers_diverse_column_then_lowest_index():
    H = np.array([[3.0, 0.0, 2.9], [0.0, 3.0, 2.9]])
    alpha = np.ones(2)
    assert forward_greedy(alpha, H, 2) == [2, 0]
    assert set_value(alpha, H, [2]) == pytest.approx(2 * math.log(3.9), abs=1e-12)
    g = marginal_gains(alpha, H, sel([2], 3))
    assert g[0] == g[1]
    assert g[0] == pytest.approx(math.log(6.9 / 3.9), abs=1e-12)
    assert g[0] == pytest.approx(0.570, abs=1e-3)  # quoted to three digits


def test_greedy_budget_exceeds_ground_set():
    rng = np.random.default_rng(1)
    alpha, H = rng.uniform(size=3), rng.exponential(size=(3, 4))
    out = forward_greedy(alpha, H, 10)
    assert sorted(out) == [0, 1, 2, 3]
    # commit order follows gains: each pick was the best available at its round
    for i, d in enumerate(out):
        g = marginal_gains(alpha, H, sel(out[:i], 4))
        assert g[d] == g.max()


def test_greedy_identical_columns():
    H = np.tile(np.array([[1.0], [2.0]]), (1, 4))
    assert forward_greedy(np.ones(2), H, 2) == [0, 1]


def test_greedy_empty_ground_set_and_zero_budget():
    assert forward_greedy(np.ones(2), np.zeros((2, 0)), 3) == []
    assert forward_greedy(np.ones(2), np.ones((2, 3)), 0) == []


def test_greedy_is_deterministic():
    rng = np.random.default_rng(5)
    alpha, H = rng.uniform(size=6), rng.exponential(size=(6, 15))
    assert forward_greedy(alpha, H, 5) == forward_greedy(alpha.copy(), H.copy(), 5)
    m = Membership(rng.uniform(size=15), ())
    assert marginal_gains(alpha, H, m).tobytes() == marginal_gains(alpha, H, m).tobytes()


# --------------------------------------------------------------------------
# exhaustive oracle


def test_oracle_modular_case_picks_two_largest():
    v = np.array([0.3, 2.0, 0.7, 1.5])
    H = np.diag(v)
    best, value = brute_force_best(np.ones(4), H, 2)
    assert best == (1, 3)
    assert value == pytest.approx(math.log1p(2.0) + math.log1p(1.5), abs=1e-12)


def test_oracle_full_set_when_budget_large():
    rng = np.random.default_rng(2)
    alpha, H = rng.uniform(size=3), rng.exponential(size=(3, 5))
    best, value = brute_force_best(alpha, H, 9)
    assert best == (0, 1, 2, 3, 4)
    assert value == pytest.approx(scmm_value(alpha, H, sel(range(5), 5)), rel=1e-12)


def test_oracle_matches_naive_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(20):
        D = int(rng.integers(2, 9))
        alpha, H = rng.uniform(size=3), rng.exponential(size=(3, D))
        k = int(rng.integers(1, D + 1))
        ref = max(itertools.combinations(range(D), k), key=lambda c: (set_value(alpha, H, c), [-i for i in c]))
        best, _ = brute_force_best(alpha, H, k, chunk=7)
        assert set_value(alpha, H, best) == pytest.approx(set_value(alpha, H, ref), rel=1e-12)


def test_oracle_ties_take_lexicographically_smallest():
    H = np.ones((1, 5))
    assert brute_force_best(np.ones(1), H, 2)[0] == (0, 1)


def test_oracle_empty():
    assert brute_force_best(np.ones(1), np.zeros((1, 0)), 2) == ((), 0.0)


def test_oracle_limits():
    with pytest.raises(OracleLimitError, match="20"):
        brute_force_best(np.ones(1), np.ones((1, 21)), 2)
    # the largest admissible case, C(20, 10) = 184756 subsets, still runs
    best, _ = brute_force_best(np.ones(1), np.ones((1, 20)), 10)
    assert best == tuple(range(10))


def test_greedy_bound_on_random_instances():
    rng = np.random.default_rng(42)
    for _ in range(25):
        alpha, H = rng.uniform(size=5), rng.exponential(size=(5, 10))
        _, opt = brute_force_best(alpha, H, 3)
        got = set_value(alpha, H, forward_greedy(alpha, H, 3))
        assert got >= (1 - 1 / math.e) * opt - 1e-9
        assert got <= opt + 1e-12
