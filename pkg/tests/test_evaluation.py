import json

import numpy as np
import pytest

from diffgreedy.data import ClaimInstance, SynthConfig, generate_synthetic, synthetic_column_kinds
from diffgreedy.errors import ContractViolation
from diffgreedy.evaluation import (
    evaluate_prefixes,
    f1_score,
    format_trace,
    metrics_at_k,
    metrics_table,
    run_baseline,
    select_dgn,
    trace_selection,
    trace_to_lines,
)
from diffgreedy.network import encode, identity_params, init_params, init_scorer
from diffgreedy.scmm import forward_greedy, set_value


def test_f1_of_mean_precision_and_recall():
    assert f1_score(0.179, 0.704) == pytest.approx(0.285, abs=5e-4)


def test_perfect_selection():
    m = metrics_at_k([[0, 1, 2]], [[2, 0, 1]], 3)
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)


def test_hand_counted_metrics():
    m = metrics_at_k([[1, 2, 3]], [[2, 5]], 3)
    assert m.precision == pytest.approx(1 / 3)
    assert m.recall == pytest.approx(1 / 2)
    assert m.f1 == pytest.approx(0.4)
    assert f1_score(0.0, 0.0) == 0.0


def test_f1_uses_dataset_means():
    # per-instance F1 would be (2/3 + 0) / 2 = 1/3; F1 of the means is 2PR/(P+R) with P=1/4, R=1/2
    m = metrics_at_k([[0, 1], [4, 5]], [[0], [1, 2, 3]], 2)
    assert (m.precision, m.recall) == (0.25, 0.5)
    assert m.f1 == pytest.approx(1 / 3)


def test_metric_errors():
    with pytest.raises(ContractViolation):
        metrics_at_k([], [], 3)
    with pytest.raises(ContractViolation):
        metrics_at_k([[0, 1, 2, 3]], [[0]], 3)


def test_metrics_permutation_invariant_and_count_identity():
    rng = np.random.default_rng(0)
    sels = [list(rng.choice(10, size=4, replace=False)) for _ in range(30)]
    labs = [list(rng.choice(10, size=int(rng.integers(1, 4)), replace=False)) for _ in range(30)]
    m = metrics_at_k(sels, labs, 4)
    perm = rng.permutation(30)
    m2 = metrics_at_k([sels[i] for i in perm], [labs[i] for i in perm], 4)
    assert m.recall == pytest.approx(m2.recall, abs=1e-15)
    assert m.precision == pytest.approx(m2.precision, abs=1e-15)
    for s, lab in zip(sels, labs):
        one = metrics_at_k([s], [lab], 4)
        assert one.precision * 4 == pytest.approx(one.recall * len(lab))


def test_prefix_recall_is_nondecreasing():
    data = generate_synthetic(SynthConfig(n_instances=40), seed=1)
    sels = run_baseline("greedy_untrained", data, 7)
    rows = evaluate_prefixes(sels, [i.labels for i in data], 7)
    recalls = [r.recall for r in rows]
    assert recalls == sorted(recalls)
    assert [r.k for r in rows] == list(range(1, 8))


def test_metrics_output_forms():
    m = metrics_at_k([[1, 2, 3]], [[2, 5]], 3)
    rec = json.loads(m.to_line())
    assert rec == {"k": 3, "recall": 0.5, "precision": pytest.approx(1 / 3), "f1": pytest.approx(0.4), "n": 1}
    table = metrics_table([("greedy", m)])
    assert "recall" in table.splitlines()[0] and "0.500" in table


# --------------------------------------------------------------------------
# baselines


def test_single_candidate_every_method():
    X = np.array([[0.4], [0.2]])
    inst = ClaimInstance("one", X, (0,), ("s0",), np.array([1.0, 1.0]), np.array([[0.4], [0.2]]))
    scorer = init_scorer(2, 3, 2, np.random.default_rng(0))
    for name in ("topk_cosine", "greedy_untrained", "encoder_only"):
        sels = run_baseline(name, [inst], 3, scorer)
        assert sels == [[0]]
        assert metrics_at_k(sels, [inst.labels], 3).recall == 1.0


@pytest.mark.parametrize("n_evidence", [1, 2])
def test_noiseless_cosine_recovers_evidence(n_evidence):
    cfg = SynthConfig(n_instances=60, noise_sigma=0.0, n_evidence=n_evidence)
    data = generate_synthetic(cfg, seed=2)
    sels = run_baseline("topk_cosine", data, n_evidence)
    assert metrics_at_k(sels, [i.labels for i in data], n_evidence).recall == 1.0


def test_greedy_takes_one_duplicate_then_diversifies():
    # columns 0 and 2 are identical evidence on feature block A, 1 is evidence on block B
    X = np.array(
        [
            [1.0, 0.0, 1.0, 0.1],
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 0.8, 0.0, 0.1],
            [0.0, 0.8, 0.0, 0.0],
        ]
    )
    inst = ClaimInstance("dup", X, (0, 1), ("a", "b", "a2", "n"))
    sel = run_baseline("greedy_untrained", [inst], 3)[0]
    assert sel[:2] == [0, 1]
    # the repeat only wins once the diverse candidates are used up
    alpha, H = np.ones(4), np.maximum(X, 0.0)
    assert set_value(alpha, H, [0, 2]) - set_value(alpha, H, [0]) < set_value(alpha, H, [0, 1]) - set_value(
        alpha, H, [0]
    )


def test_baseline_errors():
    data = generate_synthetic(SynthConfig(n_instances=2), seed=0)
    with pytest.raises(ContractViolation):
        run_baseline("bm25", data, 3)
    with pytest.raises(ContractViolation):
        run_baseline("encoder_only", data, 3)
    no_vecs = ClaimInstance("x", np.ones((2, 2)), (0,), ("a", "b"))
    with pytest.raises(ContractViolation):
        run_baseline("topk_cosine", [no_vecs], 1)


def test_threads_do_not_change_results():
    data = generate_synthetic(SynthConfig(n_instances=30), seed=3)
    params = init_params(16, 8, 6, np.random.default_rng(0))
    assert select_dgn(data, params, 3, threads=4) == select_dgn(data, params, 3)
    assert run_baseline("greedy_untrained", data, 3, threads=4) == run_baseline("greedy_untrained", data, 3)


def test_untrained_network_is_the_greedy_baseline():
    data = generate_synthetic(SynthConfig(n_instances=30), seed=4)
    assert select_dgn(data, identity_params(16), 5) == run_baseline("greedy_untrained", data, 5)


# --------------------------------------------------------------------------
# traces


def test_layer_one_gains_are_singleton_values():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(5, 9))
    params = init_params(5, 6, 4, rng)
    traces = trace_selection(X, params, 3)
    H = encode(X, params.encoder)
    for d in range(9):
        assert abs(traces[0].gains[d] - set_value(params.alpha, H, [d])) < 1e-12
    assert [t.chosen for t in traces] == forward_greedy(params.alpha, H, 3)


def test_duplicate_gain_drops_after_its_twin_is_chosen():
    X = np.array([[2.0, 2.0, 0.0], [1.0, 1.0, 1.5]])
    t = trace_selection(X, identity_params(2), 2)
    assert t[0].chosen == 0
    assert t[1].gains[1] < t[0].gains[1]


def test_planted_duplicate_falls_below_diverse_evidence():
    cfg = SynthConfig(n_instances=20, noise_sigma=0.0, n_hubs=0)
    data = generate_synthetic(cfg, seed=6)
    for inst, kinds in zip(data, synthetic_column_kinds(cfg, seed=6)):
        dup, other = kinds.index("duplicate"), inst.labels[1]
        t = trace_selection(inst.X, identity_params(inst.F), 2)
        assert t[0].chosen == inst.labels[0]
        # once its source is taken the duplicate trails the feature-disjoint evidence
        assert t[1].gains[dup] < t[1].gains[other]
        assert t[1].chosen == other


def test_trace_reports():
    X = np.array([[2.0, 2.0, 0.0], [1.0, 1.0, 1.5]])
    traces = trace_selection(X, identity_params(2), 2)
    text = format_trace(traces, ["a", "b", "c"])
    assert "layer 1: context {}" in text and "layer 2: context {a}" in text
    assert "* a" in text
    lines = [json.loads(x) for x in trace_to_lines(traces)]
    assert lines[1]["gains"][0] is None and lines[1]["chosen"] == traces[1].chosen
