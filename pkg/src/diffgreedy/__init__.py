"""Differentiable greedy selection of evidence sentences.

A claim and its candidate sentences are scored by a saturated coverage
function over encoded features. Greedy maximization is unrolled into a
network whose layers each pick one sentence; a temperature softmax makes
the unrolled network trainable end to end.
"""

from .errors import ContractViolation, DomainError, FormatError, OracleLimitError
from .scmm import Membership, brute_force_best, forward_greedy, marginal_gains, scmm_value, set_value
from .network import (
    TEST,
    TRAIN,
    DgnOutput,
    DgnParams,
    EncoderParams,
    EncoderScorer,
    LayerTrace,
    dgn_backward,
    dgn_forward,
    encode,
    finite_diff_grad,
    greedy_layer,
    identity_params,
    init_params,
    layerwise_ce_loss,
    loss_and_grad,
)
from .data import ClaimInstance, SynthConfig, generate_synthetic, load_embeddings, read_dataset, write_dataset
from .evaluation import MetricsAtK, evaluate_prefixes, metrics_at_k, run_baseline, select_dgn
from .training import AdamState, Hyperparams, adam_step, anneal_temperature, train, train_encoder

__version__ = "0.1.0"

__all__ = [
    "ContractViolation",
    "DomainError",
    "FormatError",
    "OracleLimitError",
    "Membership",
    "brute_force_best",
    "forward_greedy",
    "marginal_gains",
    "scmm_value",
    "set_value",
    "TEST",
    "TRAIN",
    "DgnOutput",
    "DgnParams",
    "EncoderParams",
    "EncoderScorer",
    "LayerTrace",
    "dgn_backward",
    "dgn_forward",
    "encode",
    "finite_diff_grad",
    "greedy_layer",
    "identity_params",
    "init_params",
    "layerwise_ce_loss",
    "loss_and_grad",
    "ClaimInstance",
    "SynthConfig",
    "generate_synthetic",
    "load_embeddings",
    "read_dataset",
    "write_dataset",
    "MetricsAtK",
    "evaluate_prefixes",
    "metrics_at_k",
    "run_baseline",
    "select_dgn",
    "AdamState",
    "Hyperparams",
    "adam_step",
    "anneal_temperature",
    "train",
    "train_encoder",
]
