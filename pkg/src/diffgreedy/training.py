"""Adam training of the greedy network and of the encoder-only ablation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .serialize import format_float
from .errors import ContractViolation
from .evaluation import _map, metrics_at_k, run_baseline, select_dgn
from .network import (
    DgnParams,
    ParamSet,
    init_params,
    init_scorer,
    loss_and_grad,
    scorer_loss_and_grad,
)

log = logging.getLogger(__name__)

ANNEAL_POLICIES = ("none", "anneal")
ANNEAL_FACTOR = 0.9


@dataclass
class Hyperparams:
    learning_rate: float = 1e-3
    tau: float = 3.0
    tau_anneal: str = "none"
    k: int = 7
    epochs: int = 20
    batch_size: int = 16
    hidden_dim: int = 64
    out_dim: int = 32
    encoder_layers: int = 2
    seed: int = 0
    pos_weight: float = 5.0
    max_grad_norm: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractViolation(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.5 < self.tau <= 6.0:
            raise ContractViolation(f"initial tau must lie in (0.5, 6], got {self.tau}")
        if self.tau_anneal not in ANNEAL_POLICIES:
            raise ContractViolation(f"tau_anneal must be one of {ANNEAL_POLICIES}, got {self.tau_anneal!r}")
        for name in ("k", "batch_size", "hidden_dim", "out_dim"):
            if getattr(self, name) < 1:
                raise ContractViolation(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ContractViolation(f"epochs must be >= 0, got {self.epochs}")
        if not self.pos_weight > 0:
            raise ContractViolation(f"pos_weight must be positive, got {self.pos_weight}")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ContractViolation(f"max_grad_norm must be positive, got {self.max_grad_norm}")

    def to_dict(self) -> dict:
        return asdict(self)


def anneal_temperature(tau: float, epoch: int, policy: str = "none") -> float:
    """Temperature for ``epoch`` (0-based): unchanged, or shrunk 10% per epoch."""
    if not tau > 0:
        raise ContractViolation(f"tau must be positive, got {tau}")
    if policy == "none":
        return tau
    if policy == "anneal":
        return tau * ANNEAL_FACTOR**epoch
    raise ContractViolation(f"unknown anneal policy {policy!r}")


# --------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    first_moment: ParamSet
    second_moment: ParamSet
    step_count: int = 0

    @classmethod
    def zeros(cls, params: ParamSet) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update; returns new params and new state."""
    p_arr, g_arr = params.named_arrays(), grads.named_arrays()
    if p_arr.keys() != g_arr.keys():
        raise ContractViolation("gradient blocks do not mirror the parameter blocks")
    for name, g in g_arr.items():
        if g.shape != p_arr[name].shape:
            raise ContractViolation(f"gradient {name} has shape {g.shape}, parameter has {p_arr[name].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")

    t = state.step_count + 1
    m_arr = state.first_moment.named_arrays()
    v_arr = state.second_moment.named_arrays()
    bc1 = 1.0 - BETA1**t
    bc2 = 1.0 - BETA2**t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in p_arr.items():
        g = g_arr[name]
        m = BETA1 * m_arr[name] + (1.0 - BETA1) * g
        v = BETA2 * v_arr[name] + (1.0 - BETA2) * (g * g)
        new_p[name] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        new_m[name], new_v[name] = m, v
    cls = type(params)
    return cls.from_named(new_p), AdamState(cls.from_named(new_m), cls.from_named(new_v), t)


def _clip(grads, max_norm):
    if max_norm is None:
        return grads
    norm = float(np.linalg.norm(grads.flat()))
    if norm <= max_norm:
        return grads
    return grads.map(lambda g: g * (max_norm / norm))


def _mean_grads(grads_list):
    total = grads_list[0]
    for g in grads_list[1:]:
        total = type(total).from_named({k: total.named_arrays()[k] + v for k, v in g.named_arrays().items()})
    return total.map(lambda a: a / len(grads_list))


# --------------------------------------------------------------------------
# training loops


@dataclass
class EpochRecord:
    epoch: int
    mean_train_loss: float
    val_recall: float | None
    tau: float

    def to_line(self, k: int) -> str:
        val = "null" if self.val_recall is None else format_float(self.val_recall)
        return (
            f'{{"epoch":{self.epoch},"mean_train_loss":{format_float(self.mean_train_loss)},'
            f'"val_recall@{k}":{val},"tau":{format_float(self.tau)}}}'
        )


@dataclass
class History:
    k: int
    records: list = field(default_factory=list)
    skipped: int = 0

    def to_lines(self) -> list[str]:
        return [r.to_line(self.k) for r in self.records]


def _run(dataset, hyper: Hyperparams, params, step_fn, val_fn, rng, threads=1):
    """Shared epoch/batch loop; ``step_fn(params, inst, tau) -> (loss, grads)``."""
    history = History(hyper.k)
    usable = [inst for inst in dataset if inst.labels]
    history.skipped = len(dataset) - len(usable)
    if history.skipped:
        log.warning("skipping %d instance(s) without labels", history.skipped)
    if hyper.epochs and not usable:
        raise ContractViolation("no labeled instances to train on")

    state = AdamState.zeros(params)
    for epoch in range(hyper.epochs):
        tau = anneal_temperature(hyper.tau, epoch, hyper.tau_anneal)
        order = rng.permutation(len(usable))
        losses = []
        for start in range(0, len(order), hyper.batch_size):
            batch = [usable[i] for i in order[start : start + hyper.batch_size]]
            results = _map(lambda inst: step_fn(params, inst, tau), batch, threads)
            losses.extend(r[0] for r in results)
            grads = _clip(_mean_grads([r[1] for r in results]), hyper.max_grad_norm)
            params, state = adam_step(params, grads, state, hyper.learning_rate)
            if not np.all(np.isfinite(params.flat())):
                raise FloatingPointError(f"parameters became non-finite at epoch {epoch}")
        val = val_fn(params)
        history.records.append(EpochRecord(epoch, float(np.mean(losses)), val, tau))
        log.info("epoch %d loss %.5f val_recall %s tau %.4g", epoch, np.mean(losses), val, tau)
    return params, history


def _val_recall(validation, k, select):
    if not validation:
        return lambda params: None
    labels = [inst.labels for inst in validation]
    return lambda params: metrics_at_k(select(params), labels, k).recall


def train(dataset, hyper: Hyperparams, validation=None, init: DgnParams | None = None, threads: int = 1):
    """Train the greedy network with the layer-wise loss.

    Returns the final parameters and a per-epoch history. Instances without
    labels are skipped and counted in ``history.skipped``.
    """
    if not dataset:
        raise ContractViolation("training set is empty")
    rng = np.random.default_rng(hyper.seed)
    params = init if init is not None else init_params(
        dataset[0].F, hyper.hidden_dim, hyper.out_dim, rng, hyper.encoder_layers
    )

    def step(p, inst, tau):
        return loss_and_grad(inst.X, p, hyper.k, tau, list(inst.labels))

    val_fn = _val_recall(validation, hyper.k, lambda p: select_dgn(validation, p, hyper.k, threads))
    return _run(dataset, hyper, params, step, val_fn, rng, threads)


def train_encoder(dataset, hyper: Hyperparams, validation=None, threads: int = 1):
    """Train the encoder-only ablation (``encoder_layers=3`` gives the deep variant)."""
    if not dataset:
        raise ContractViolation("training set is empty")
    rng = np.random.default_rng(hyper.seed)
    scorer = init_scorer(dataset[0].F, hyper.hidden_dim, hyper.out_dim, rng, hyper.encoder_layers)

    def step(p, inst, tau):
        return scorer_loss_and_grad(inst.X, p, inst.labels, hyper.pos_weight)

    val_fn = _val_recall(validation, hyper.k, lambda p: run_baseline("encoder_only", validation, hyper.k, p, threads))
    return _run(dataset, hyper, scorer, step, val_fn, rng, threads)
