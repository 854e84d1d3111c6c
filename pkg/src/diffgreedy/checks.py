"""Randomized self-checks behind ``oracle-check``.

Each check draws its own instances from a seeded generator and reports the
worst value of its figure of merit, so a run is reproducible byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import (
    TEST,
    dgn_backward,
    dgn_forward,
    encode,
    finite_diff_grad,
    init_params,
    kink_distance,
    max_relative_error,
)
from .scmm import Membership, brute_force_best, forward_greedy, marginal_gains, set_value

GREEDY_RATIO = 1.0 - 1.0 / math.e


@dataclass
class CheckResult:
    name: str
    n: int
    worst: float
    threshold: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<22} n={self.n:<5} worst={self.worst:.6e} threshold={self.threshold:.1e} {status}"


def random_objective(rng, max_d=12, max_f=6, min_d=1):
    """Nonnegative ``alpha`` and ``H`` with some exact zeros mixed in."""
    D = int(rng.integers(min_d, max_d + 1))
    F = int(rng.integers(1, max_f + 1))
    alpha = rng.uniform(0.0, 2.0, size=F) * (rng.random(F) > 0.1)
    H = rng.exponential(1.0, size=(F, D)) * (rng.random((F, D)) > 0.3)
    return alpha, H


def check_submodularity(rng, n: int, tol: float = 1e-9) -> CheckResult:
    """``gain(v | A) - gain(v | B)`` over random ``A ⊆ B``, ``v ∉ B``."""
    worst = np.inf
    for _ in range(n):
        alpha, H = random_objective(rng, max_d=10, min_d=2)
        D = H.shape[1]
        v = int(rng.integers(D))
        rest = np.array([d for d in range(D) if d != v])
        in_b = rest[rng.random(rest.size) < 0.5]
        in_a = in_b[rng.random(in_b.size) < 0.5]
        gA = marginal_gains(alpha, H, Membership.from_indices(in_a, D))[v]
        gB = marginal_gains(alpha, H, Membership.from_indices(in_b, D))[v]
        worst = min(worst, gA - gB)
    return CheckResult("submodularity", n, float(worst), -tol, bool(worst >= -tol))


def check_greedy_bound(rng, n: int, tol: float = 1e-9) -> CheckResult:
    """Worst ``f(greedy) / f(opt)`` against the exhaustive optimum.

    Passes when ``f(greedy) >= (1 - 1/e) f(opt) - tol`` on every instance;
    instances with ``f(opt) = 0`` count as ratio 1.
    """
    worst_ratio, ok = 1.0, True
    for _ in range(n):
        alpha, H = random_objective(rng, max_d=12)
        k = int(rng.integers(1, 5))
        _, opt = brute_force_best(alpha, H, k)
        got = set_value(alpha, H, forward_greedy(alpha, H, k))
        ok &= got >= GREEDY_RATIO * opt - tol
        if opt > 0:
            worst_ratio = min(worst_ratio, got / opt)
    return CheckResult("greedy_bound", n, worst_ratio, GREEDY_RATIO, bool(ok))


def random_network_instance(rng, max_d=10, max_f=8, max_k=4, hidden=6, out=5):
    D = int(rng.integers(2, max_d + 1))
    F = int(rng.integers(1, max_f + 1))
    k = int(rng.integers(1, max_k + 1))
    X = rng.normal(size=(F, D))
    params = init_params(F, hidden, out, rng)
    for b in params.encoder.biases:
        b += rng.normal(scale=0.3, size=b.shape)
    params.alpha_raw[:] = rng.normal(size=out)
    n_labels = int(rng.integers(1, min(k, D) + 1))
    labels = [int(i) for i in rng.choice(D, size=n_labels, replace=False)]
    return X, params, k, labels


def check_test_equivalence(rng, n: int) -> CheckResult:
    """Count of instances where test-mode selection differs from greedy on ``encode(X)``."""
    mismatches = 0
    for _ in range(n):
        X, params, k, _ = random_network_instance(rng, max_d=12, max_k=7)
        sel = dgn_forward(X, params, k, mode=TEST).selection
        ref = forward_greedy(params.alpha, encode(X, params.encoder), k)
        mismatches += sel != ref
    return CheckResult("test_equivalence", n, float(mismatches), 0.0, mismatches == 0)


def check_gradients(rng, n: int, tol: float = 1e-4, h: float = 1e-5, margin: float = 1e-3) -> CheckResult:
    """Analytic gradient against central differences.

    Instances whose forward pass sits within ``margin`` of a kink are redrawn.
    """
    worst = 0.0
    done = 0
    while done < n:
        X, params, k, labels = random_network_instance(rng)
        tau = (1.0, 3.0)[done % 2]
        if kink_distance(X, params, k, tau) < margin:
            continue
        a = dgn_backward(X, params, k, tau, labels)
        num = finite_diff_grad(X, params, k, tau, labels, h=h)
        worst = max(worst, max_relative_error(a, num))
        done += 1
    return CheckResult("gradient", n, worst, tol, bool(worst < tol))


def run_all(n: int, seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        check_submodularity(rng, 10 * n),
        check_greedy_bound(rng, n),
        check_test_equivalence(rng, n),
        check_gradients(rng, n),
    ]
