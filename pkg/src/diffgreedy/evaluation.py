"""Precision/recall/F1 at k, baselines and per-layer traces."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .serialize import format_float
from .errors import ContractViolation
from .network import DgnParams, EncoderScorer, LayerTrace, TEST, dgn_forward
from .scmm import forward_greedy

BASELINES = ("topk_cosine", "greedy_untrained", "encoder_only")


@dataclass(frozen=True)
class MetricsAtK:
    k: int
    recall: float
    precision: float
    f1: float
    n_instances: int

    def to_line(self) -> str:
        return (
            f'{{"k":{self.k},"recall":{format_float(self.recall)},'
            f'"precision":{format_float(self.precision)},"f1":{format_float(self.f1)},'
            f'"n":{self.n_instances}}}'
        )


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def metrics_at_k(selections, labels, k: int) -> MetricsAtK:
    """Dataset means of per-instance recall and precision; F1 of the two means.

    Precision divides by ``k`` even when fewer than ``k`` candidates exist.
    """
    if len(selections) == 0:
        raise ContractViolation("metrics need at least one instance")
    if len(selections) != len(labels):
        raise ContractViolation(f"{len(selections)} selections but {len(labels)} label sets")
    recalls, precisions = [], []
    for sel, lab in zip(selections, labels):
        if len(sel) > k:
            raise ContractViolation(f"selection of size {len(sel)} exceeds k={k}")
        lab = set(lab)
        hits = len(set(sel) & lab)
        recalls.append(hits / len(lab) if lab else 0.0)
        precisions.append(hits / k)
    p, r = float(np.mean(precisions)), float(np.mean(recalls))
    return MetricsAtK(k, r, p, f1_score(p, r), len(selections))


def metrics_table(rows: list[tuple[str, MetricsAtK]]) -> str:
    lines = [f"{'model':<18} {'k':>3} {'recall':>8} {'precision':>10} {'f1':>8} {'n':>6}"]
    for name, m in rows:
        lines.append(f"{name:<18} {m.k:>3} {m.recall:>8.3f} {m.precision:>10.3f} {m.f1:>8.3f} {m.n_instances:>6}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# scorers and baselines


def _cosines(inst) -> np.ndarray:
    if inst.claim_vec is None:
        raise ContractViolation(f"{inst.claim_id}: cosine baseline needs pooled claim/sentence vectors")
    c, S = inst.claim_vec, inst.sentence_vecs
    norms = np.linalg.norm(S, axis=0) * np.linalg.norm(c)
    dots = c @ S
    return np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)


def _top_k(scores, k):
    # stable sort: ties keep the lower index first
    return [int(i) for i in np.argsort(-scores, kind="stable")[:k]]


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def select_dgn(dataset, params: DgnParams, k: int, threads: int = 1) -> list[list[int]]:
    return _map(lambda inst: dgn_forward(inst.X, params, k, mode=TEST).selection, dataset, threads)


def run_baseline(name: str, dataset, k: int, params=None, threads: int = 1) -> list[list[int]]:
    """Per-instance selections of an untrained baseline or the encoder-only ablation."""
    if name == "topk_cosine":
        fn = lambda inst: _top_k(_cosines(inst), k)  # noqa: E731
    elif name == "greedy_untrained":
        fn = lambda inst: forward_greedy(np.ones(inst.F), np.maximum(inst.X, 0.0), k)  # noqa: E731
    elif name == "encoder_only":
        if not isinstance(params, EncoderScorer):
            raise ContractViolation("encoder_only needs trained encoder-scorer parameters")
        fn = lambda inst: _top_k(params.scores(inst.X), k)  # noqa: E731
    else:
        raise ContractViolation(f"unknown baseline {name!r}; expected one of {', '.join(BASELINES)}")
    return _map(fn, dataset, threads)


def evaluate_prefixes(selections, labels, k: int) -> list[MetricsAtK]:
    """Metrics at every budget ``1..k`` from nested (prefix) selections."""
    return [metrics_at_k([s[:j] for s in selections], labels, j) for j in range(1, k + 1)]


# --------------------------------------------------------------------------
# traces


def trace_selection(X, params: DgnParams, k: int) -> list[LayerTrace]:
    """Test-mode layer traces; each carries the full unmasked gain vector."""
    return dgn_forward(X, params, k, mode=TEST).traces


def format_trace(traces, sentence_ids=None) -> str:
    """Human-readable per-layer report: ``f({a})`` at layer 1, ``f(S + v) - f(S)`` after."""
    lines = []
    chosen: list[str] = []
    for t in traces:
        ids = sentence_ids or [str(i) for i in range(t.gains.size)]
        ctx = "{" + ",".join(chosen) + "}"
        lines.append(f"layer {t.layer_index}: context {ctx}")
        order = np.argsort(-np.where(t.masked, -np.inf, t.gains), kind="stable")
        for d in order:
            if t.masked[d]:
                continue
            mark = "*" if d == t.chosen else " "
            lines.append(f"  {mark} {ids[d]:<12} gain {t.gains[d]:.4f}")
        chosen.append(ids[t.chosen])
    return "\n".join(lines)


def trace_to_lines(traces) -> list[str]:
    return [
        json.dumps(
            {
                "layer": t.layer_index,
                "chosen": t.chosen,
                "gains": [None if t.masked[i] else float(g) for i, g in enumerate(t.gains)],
            }
        )
        for t in traces
    ]
