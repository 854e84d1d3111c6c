"""Sum-of-concave-over-modular (SCMM) objective and forward greedy search.

The objective scores a subset ``A`` of candidate columns of a nonnegative
feature matrix ``H`` (features x candidates) as

    f(A) = sum_u alpha[u] * log(1 + sum_{a in A} H[u, a])

which is monotone submodular whenever ``alpha`` and ``H`` are nonnegative.
Membership is allowed to be fractional so the same code serves the relaxed
training path; with a 0/1 membership vector it is the set function above.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DomainError, OracleLimitError

# Stand-in for -inf on committed candidates; finite so softmax stays NaN-free.
MASK_VALUE = -1e30

MAX_ORACLE_D = 20
MAX_ORACLE_SUBSETS = 10**6


@dataclass(frozen=True)
class Membership:
    """Selection state threaded through the greedy iterations.

    Attributes
    ----------
    m : np.ndarray
        Per-candidate membership mass in ``[0, 1]``.
    hard_order : tuple of int
        Indices committed so far, in commit order. Each has ``m == 1``.
    """

    m: np.ndarray
    hard_order: tuple = field(default=())

    @classmethod
    def empty(cls, n: int) -> "Membership":
        return cls(np.zeros(n), ())

    @classmethod
    def from_indices(cls, indices, n: int) -> "Membership":
        m = np.zeros(n)
        order = tuple(int(i) for i in indices)
        m[list(order)] = 1.0
        return cls(m, order)

    def validate(self) -> None:
        m = self.m
        if m.ndim != 1:
            raise ContractViolation(f"membership must be 1-D, got shape {m.shape}")
        if np.any(m < 0.0) or np.any(m > 1.0) or not np.all(np.isfinite(m)):
            raise ContractViolation("membership entries must lie in [0, 1]")
        if len(set(self.hard_order)) != len(self.hard_order):
            raise ContractViolation(f"duplicate committed index in {self.hard_order}")
        for i in self.hard_order:
            if not 0 <= i < m.size:
                raise ContractViolation(f"committed index {i} out of range for D={m.size}")
            if m[i] != 1.0:
                raise ContractViolation(f"committed index {i} has membership {m[i]!r}, expected 1")

    @property
    def committed_mask(self) -> np.ndarray:
        mask = np.zeros(self.m.size, dtype=bool)
        mask[list(self.hard_order)] = True
        return mask


def _check(alpha, H, m: Membership | None = None):
    alpha = np.asarray(alpha, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if alpha.ndim != 1 or H.ndim != 2:
        raise ContractViolation(
            f"expected alpha of shape (F',) and H of shape (F', D); got {alpha.shape}, {H.shape}"
        )
    if alpha.shape[0] != H.shape[0]:
        raise ContractViolation(f"alpha has {alpha.shape[0]} entries but H has {H.shape[0]} rows")
    if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
        raise DomainError("alpha must be finite and nonnegative")
    if np.any(H < 0) or not np.all(np.isfinite(H)):
        raise DomainError("H must be finite and nonnegative")
    if m is not None:
        if m.m.shape != (H.shape[1],):
            raise ContractViolation(
                f"membership has {m.m.shape} entries but H has {H.shape[1]} columns"
            )
        m.validate()
    return alpha, H


def scmm_value(alpha, H, m: Membership) -> float:
    """Evaluate ``sum_u alpha[u] * log1p(sum_d m[d] * H[u, d])``."""
    alpha, H = _check(alpha, H, m)
    return float(alpha @ np.log1p(H @ m.m))


def set_value(alpha, H, subset) -> float:
    """Set-function form: sum the selected columns first, then apply the concave map."""
    alpha, H = _check(alpha, H)
    cols = list(subset)
    if not cols:
        return 0.0
    return float(alpha @ np.log1p(H[:, cols].sum(axis=1)))


def raw_gains(alpha: np.ndarray, H: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Unchecked, unmasked marginal gains of raising each ``m[d]`` to 1.

    ``log1p(delta / (1 + z))`` equals ``log1p(z + delta) - log1p(z)`` but does
    not lose precision when ``delta`` is small.
    """
    z = H @ m
    delta = H * (1.0 - m)
    return alpha @ np.log1p(delta / (1.0 + z)[:, None])


def marginal_gains(alpha, H, m: Membership) -> np.ndarray:
    """Gain of adding each candidate to the current state.

    Committed candidates get ``MASK_VALUE`` so they are never re-selected.
    """
    alpha, H = _check(alpha, H, m)
    gains = raw_gains(alpha, H, m.m)
    if m.hard_order:
        gains[list(m.hard_order)] = MASK_VALUE
    return gains


def forward_greedy(alpha, H, k: int) -> list[int]:
    """Commit the best marginal gain ``min(k, D)`` times; ties go to the lowest index."""
    alpha, H = _check(alpha, H)
    if k < 0:
        raise ContractViolation(f"k must be nonnegative, got {k}")
    D = H.shape[1]
    state = Membership.empty(D)
    for _ in range(min(k, D)):
        gains = marginal_gains(alpha, H, state)
        v = int(np.argmax(gains))
        m = state.m.copy()
        m[v] = 1.0
        state = Membership(m, state.hard_order + (v,))
    return list(state.hard_order)


def brute_force_best(alpha, H, k: int, *, chunk: int = 65536) -> tuple[tuple[int, ...], float]:
    """Exact maximizer of the objective over subsets of size at most ``k``.

    Because the objective is monotone, only subsets of size ``min(k, D)`` are
    enumerated. Ties resolve to the lexicographically smallest index tuple.

    Raises
    ------
    OracleLimitError
        If ``D > 20`` or more than ``10**6`` subsets would be enumerated.
    """
    alpha, H = _check(alpha, H)
    D = H.shape[1]
    size = min(max(k, 0), D)
    if D > MAX_ORACLE_D:
        raise OracleLimitError(f"D={D} exceeds the oracle limit D <= {MAX_ORACLE_D}")
    n_subsets = math.comb(D, size)
    if n_subsets > MAX_ORACLE_SUBSETS:
        raise OracleLimitError(
            f"C({D}, {size}) = {n_subsets} subsets exceeds the oracle limit {MAX_ORACLE_SUBSETS}"
        )
    if size == 0:
        return (), 0.0

    best_val = -np.inf
    best = None
    combos = itertools.combinations(range(D), size)
    while True:
        block = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(combos, chunk)), dtype=np.intp
        ).reshape(-1, size)
        if block.size == 0:
            break
        vals = alpha @ np.log1p(H[:, block].sum(axis=2))
        i = int(np.argmax(vals))
        # strict comparison keeps the earlier (lexicographically smaller) tuple
        if vals[i] > best_val:
            best_val = vals[i]
            best = tuple(int(j) for j in block[i])
    return best, set_value(alpha, H, best)
