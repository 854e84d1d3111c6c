"""Unfolded greedy network: encoder, greedy layers, loss and exact gradients.

Forward pass (one claim with ``D`` candidate sentences)::

    H      = ReLU(W_L ... ReLU(W_1 X + b_1) ... + b_L)       (F' x D)
    alpha  = softplus(alpha_raw)
    m^0    = 0
    g^j    = marginal gains of f_alpha at m^{j-1}             (one per candidate)
    p^j    = softmax(g^j / tau)           (train)  |  onehot(argmax g^j)   (test)
    m^j    = min(1, m^{j-1} + p^j)        (train)  |  commit argmax        (test)

The training loss is the layer-wise cross entropy between ``p^j`` and the
``j``-th label. ``dgn_backward`` is a hand-written reverse pass through all
of the above; ``finite_diff_grad`` is the independent check used by tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .scmm import Membership, marginal_gains, raw_gains

TRAIN = "train"
TEST = "test"
PROB_EPS = 1e-7
MIN_FD_STEP = 1e-8


def relu(x):
    return np.maximum(x, 0.0)


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inverse(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


class ParamSet:
    """Mixin mapping a parameter container to and from ``{name: array}``."""

    def named_arrays(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray]):
        raise NotImplementedError

    def map(self, fn):
        return type(self).from_named({k: fn(v) for k, v in self.named_arrays().items()})

    def zeros_like(self):
        return self.map(np.zeros_like)

    def copy(self):
        return self.map(np.copy)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.named_arrays().values()])


@dataclass
class EncoderParams(ParamSet):
    """Stacked linear + ReLU layers applied to every candidate column.

    The default encoder has two layers (``F -> F'' -> F'``). One layer, or a
    third ``F' -> F'`` layer (the deep-encoder variant), is also allowed.
    """

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ContractViolation("encoder needs matching, nonempty weight and bias lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ContractViolation(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ContractViolation(
                    f"layer {i} expects {w.shape[1]} inputs, previous layer emits "
                    f"{self.weights[i - 1].shape[0]}"
                )

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def named_arrays(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"encoder.{i}.weight"] = w
            out[f"encoder.{i}.bias"] = b
        return out

    @classmethod
    def from_named(cls, arrays):
        n = sum(1 for k in arrays if k.startswith("encoder.") and k.endswith(".weight"))
        return cls(
            [np.asarray(arrays[f"encoder.{i}.weight"], dtype=np.float64) for i in range(n)],
            [np.asarray(arrays[f"encoder.{i}.bias"], dtype=np.float64) for i in range(n)],
        )


@dataclass
class DgnParams(ParamSet):
    """Everything trained: the encoder plus raw SCMM weights (``alpha = softplus(alpha_raw)``)."""

    encoder: EncoderParams
    alpha_raw: np.ndarray

    def __post_init__(self):
        if self.alpha_raw.shape != (self.encoder.out_dim,):
            raise ContractViolation(
                f"alpha_raw has shape {self.alpha_raw.shape}, encoder emits {self.encoder.out_dim}"
            )

    @property
    def alpha(self) -> np.ndarray:
        return softplus(self.alpha_raw)

    def named_arrays(self):
        out = self.encoder.named_arrays()
        out["alpha_raw"] = self.alpha_raw
        return out

    @classmethod
    def from_named(cls, arrays):
        return cls(EncoderParams.from_named(arrays), np.asarray(arrays["alpha_raw"], dtype=np.float64))


def init_encoder(in_dim: int, dims, rng: np.random.Generator) -> EncoderParams:
    """Fan-scaled uniform weights in ``+-sqrt(6 / (fan_in + fan_out))``, zero biases."""
    weights, biases = [], []
    fan_in = in_dim
    for fan_out in dims:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
        fan_in = fan_out
    return EncoderParams(weights, biases)


def encoder_dims(hidden: int, out: int, layers: int = 2) -> list[int]:
    if layers == 1:
        return [out]
    if layers == 2:
        return [hidden, out]
    if layers == 3:
        return [hidden, out, out]
    raise ContractViolation(f"encoder supports 1, 2 or 3 layers, got {layers}")


def init_params(in_dim: int, hidden: int, out: int, rng: np.random.Generator, layers: int = 2) -> DgnParams:
    encoder = init_encoder(in_dim, encoder_dims(hidden, out, layers), rng)
    # softplus(0) = ln 2 for every feature
    return DgnParams(encoder, np.zeros(out))


def identity_params(F: int) -> DgnParams:
    """Single identity layer with ``alpha = 1``: the untrained greedy on ``ReLU(X)``."""
    encoder = EncoderParams([np.eye(F)], [np.zeros(F)])
    return DgnParams(encoder, softplus_inverse(np.ones(F)))


# --------------------------------------------------------------------------
# encoder


def _encode(X, enc: EncoderParams):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != enc.in_dim:
        raise ContractViolation(f"X has shape {X.shape}, encoder expects {enc.in_dim} rows")
    inputs, pre = [], []
    a = X
    for w, b in zip(enc.weights, enc.biases):
        inputs.append(a)
        s = w @ a + b[:, None]
        pre.append(s)
        a = relu(s)
    return a, (inputs, pre)


def encode(X, params: EncoderParams) -> np.ndarray:
    """Map raw features ``X`` (F x D) to nonnegative features ``H`` (F' x D)."""
    return _encode(X, params)[0]


def encode_backward(cache, dH: np.ndarray, enc: EncoderParams) -> EncoderParams:
    inputs, pre = cache
    dws, dbs = [], []
    grad = dH
    for a, s, w in zip(reversed(inputs), reversed(pre), reversed(enc.weights)):
        ds = grad * (s > 0.0)
        dws.append(ds @ a.T)
        dbs.append(ds.sum(axis=1))
        grad = w.T @ ds
    return EncoderParams(dws[::-1], dbs[::-1])


# --------------------------------------------------------------------------
# greedy layers


@dataclass
class LayerTrace:
    """What one greedy layer saw and did.

    ``gains`` are the marginal gains before masking; ``masked`` flags the
    candidates that were already committed and therefore excluded.
    """

    layer_index: int
    gains: np.ndarray
    masked: np.ndarray
    distribution: np.ndarray
    chosen: int


@dataclass
class DgnOutput:
    traces: list
    selection: list
    loss: float | None = None


def masked_softmax(gains: np.ndarray, tau: float) -> np.ndarray:
    z = gains / tau
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def greedy_layer(H, alpha, m: Membership, tau: float, mode: str, layer_index: int = 1):
    """One unfolded greedy iteration.

    Returns the layer trace and the next membership state. In train mode the
    tempered softmax mass is added to the soft membership and nothing is
    committed; in test mode the argmax (lowest index on ties) is committed.
    """
    mask = m.committed_mask
    if mask.all():
        raise ContractViolation("every candidate is already committed")
    gains = marginal_gains(alpha, H, m)
    raw = raw_gains(np.asarray(alpha, dtype=np.float64), np.asarray(H, dtype=np.float64), m.m)

    if mode == TEST:
        chosen = int(np.argmax(gains))
        p = np.zeros_like(gains)
        p[chosen] = 1.0
        new_m = m.m.copy()
        new_m[chosen] = 1.0
        nxt = Membership(new_m, m.hard_order + (chosen,))
    elif mode == TRAIN:
        if not tau > 0:
            raise ContractViolation(f"temperature must be positive, got {tau}")
        p = masked_softmax(gains, tau)
        chosen = int(np.argmax(p))
        new_m = np.where(mask, m.m, np.minimum(1.0, m.m + p))
        nxt = Membership(new_m, m.hard_order)
    else:
        raise ContractViolation(f"mode must be 'train' or 'test', got {mode!r}")
    return LayerTrace(layer_index, raw, mask, p, chosen), nxt


def layerwise_ce_loss(distributions, labels, eps: float = PROB_EPS) -> float:
    """Sum over layers ``j`` of binary cross entropy between ``p^j`` and ``onehot(L_j)``.

    Only the first ``min(len(distributions), len(labels))`` layers contribute.
    The arguments of both logs are floored at ``eps``, so an exact one-hot
    prediction scores exactly 0 while a zero probability stays finite.
    """
    if len(labels) == 0:
        raise ContractViolation("layerwise loss needs at least one label")
    total = 0.0
    for p, label in zip(distributions, labels):
        target = np.zeros(p.size, dtype=bool)
        target[label] = True
        total -= np.log(np.maximum(p[target], eps)).sum() + np.log(np.maximum(1.0 - p[~target], eps)).sum()
    return float(total)


def _loss_grad_p(p, label, eps=PROB_EPS):
    # zero on the floored side of each log
    q = 1.0 - p
    g = np.where(q > eps, 1.0 / np.maximum(q, eps), 0.0)
    g[label] = -1.0 / p[label] if p[label] > eps else 0.0
    return g


def _check_mode_args(mode, labels):
    if mode == TRAIN and not labels:
        raise ContractViolation("train mode requires a nonempty label list")


def _decode_distinct(distributions):
    selection = []
    for p in distributions:
        q = p.copy()
        q[selection] = -np.inf
        selection.append(int(np.argmax(q)))
    return selection


def _forward(X, params: DgnParams, k: int, tau: float, mode: str, labels=None):
    _check_mode_args(mode, labels)
    H, enc_cache = _encode(X, params.encoder)
    alpha = params.alpha
    D = H.shape[1]
    state = Membership.empty(D)
    traces, states = [], []
    for j in range(min(k, D)):
        states.append(state)
        trace, state = greedy_layer(H, alpha, state, tau, mode, layer_index=j + 1)
        traces.append(trace)

    if mode == TEST:
        out = DgnOutput(traces, list(state.hard_order))
    else:
        dists = [t.distribution for t in traces]
        out = DgnOutput(traces, _decode_distinct(dists), layerwise_ce_loss(dists, labels))
    return out, (H, enc_cache, alpha, states)


def dgn_forward(X, params: DgnParams, k: int, tau: float = 1.0, mode: str = TEST, labels=None) -> DgnOutput:
    """Run the encoder and ``min(k, D)`` greedy layers.

    In test mode the selection is exactly the forward greedy result on the
    encoded features. In train mode ``selection`` lists each layer's most
    probable not-yet-listed candidate, and ``loss`` is the layer-wise loss.
    """
    return _forward(X, params, k, tau, mode, labels)[0]


def loss_and_grad(X, params: DgnParams, k: int, tau: float, labels) -> tuple[float, DgnParams]:
    """Train-mode loss and its exact gradient with respect to every parameter.

    Masking of committed candidates is treated as constant; ReLU and the
    ``min(1, .)`` clamp use subgradient 0 at their kinks, and so does the
    floor on the log arguments.
    """
    out, (H, enc_cache, alpha, states) = _forward(X, params, k, tau, TRAIN, labels)
    dists = [t.distribution for t in out.traces]
    n_layers = len(dists)
    D = H.shape[1]

    dH = np.zeros_like(H)
    dalpha = np.zeros_like(alpha)
    dm_next = np.zeros(D)
    for j in reversed(range(n_layers)):
        m = states[j].m
        mask = states[j].committed_mask
        p = dists[j]

        dp = _loss_grad_p(p, labels[j]) if j < len(labels) else np.zeros(D)
        through = (m + p < 1.0) & ~mask
        dp = dp + dm_next * through
        dm = np.where(mask, dm_next, dm_next * through)

        # softmax over g / tau
        dg = p * (dp - p @ dp) / tau
        dg[mask] = 0.0

        # gains g_d = sum_u alpha_u [log q_ud - log c_u], c = 1 + H m, q = c + H_d (1 - m_d)
        z = H @ m
        c = 1.0 + z
        one_minus = 1.0 - m
        delta = H * one_minus
        q = c[:, None] + delta
        dalpha += np.log1p(delta / c[:, None]) @ dg
        r = (dg / q).sum(axis=1)
        w = alpha * (r - dg.sum() / c)
        local = alpha[:, None] * dg / q
        dH += np.outer(w, m) + local * one_minus
        dm += H.T @ w - (local * H).sum(axis=0)
        dm_next = dm

    enc_grad = encode_backward(enc_cache, dH, params.encoder)
    return out.loss, DgnParams(enc_grad, dalpha * sigmoid(params.alpha_raw))


def dgn_backward(X, params: DgnParams, k: int, tau: float, labels) -> DgnParams:
    """Gradient of the train-mode layer-wise loss, shaped like ``params``."""
    return loss_and_grad(X, params, k, tau, labels)[1]


def train_loss(X, params: DgnParams, k: int, tau: float, labels) -> float:
    return dgn_forward(X, params, k, tau, TRAIN, labels).loss


def finite_diff_grad(X, params: DgnParams, k: int, tau: float, labels, h: float = 1e-5, loss_fn=None):
    """Central-difference gradient, one parameter at a time.

    ``loss_fn(params)`` overrides the network loss (used to sanity check the
    differencing itself). Steps below ``1e-8`` are refused: cancellation makes
    the quotient meaningless in float64.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    if h < MIN_FD_STEP:
        raise ValueError(f"step {h} is below {MIN_FD_STEP}; central differences are unreliable there")
    if loss_fn is None:
        loss_fn = lambda p: train_loss(X, p, k, tau, labels)  # noqa: E731

    arrays = params.copy().named_arrays()
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(type(params).from_named(arrays))
            flat[i] = orig - h
            down = loss_fn(type(params).from_named(arrays))
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return type(params).from_named(grads)


def max_relative_error(analytic: ParamSet, numeric: ParamSet, floor: float = 1e-6) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all entries."""
    a, n = analytic.flat(), numeric.flat()
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor), initial=0.0))


def kink_distance(X, params: DgnParams, k: int, tau: float) -> float:
    """Distance from the nearest nondifferentiable point of the train-mode loss.

    Finite differences straddling a ReLU, clamp or log-floor kink
    disagree with any one-sided derivative, so gradient checks skip
    instances closer than a few steps.
    """
    out, (H, (inputs, pre), alpha, states) = _forward(X, params, k, tau, TRAIN, [0])
    d = min(float(np.min(np.abs(s))) for s in pre)
    for st, t in zip(states, out.traces):
        p = t.distribution
        d = min(d, float(np.min(np.abs(st.m + p - 1.0))))
        # the log floors are measured as log ratios: p itself can be tiny
        with np.errstate(divide="ignore"):
            d = min(d, float(np.min(np.abs(np.log(p / PROB_EPS)))))
            d = min(d, float(np.min(np.abs(np.log((1.0 - p) / PROB_EPS)))))
    return d


# --------------------------------------------------------------------------
# encoder-only ablation


@dataclass
class EncoderScorer(ParamSet):
    """Greedy layers removed: each candidate is scored alone as ``sum_u H[u, d] + bias``."""

    encoder: EncoderParams
    head_bias: np.ndarray

    def named_arrays(self):
        out = self.encoder.named_arrays()
        out["head_bias"] = self.head_bias
        return out

    @classmethod
    def from_named(cls, arrays):
        return cls(EncoderParams.from_named(arrays), np.asarray(arrays["head_bias"], dtype=np.float64).reshape(1))

    def scores(self, X) -> np.ndarray:
        return encode(X, self.encoder).sum(axis=0) + self.head_bias[0]


def init_scorer(in_dim: int, hidden: int, out: int, rng: np.random.Generator, layers: int = 2) -> EncoderScorer:
    return EncoderScorer(init_encoder(in_dim, encoder_dims(hidden, out, layers), rng), np.zeros(1))


def scorer_loss_and_grad(X, scorer: EncoderScorer, labels, pos_weight: float) -> tuple[float, EncoderScorer]:
    """Per-sentence binary cross entropy with evidence sentences weighted by ``pos_weight``."""
    H, cache = _encode(X, scorer.encoder)
    s = H.sum(axis=0) + scorer.head_bias[0]
    y = np.zeros(s.size)
    y[list(labels)] = 1.0
    # -log sigmoid(s) = softplus(-s), -log(1 - sigmoid(s)) = softplus(s)
    loss = float(pos_weight * (y * softplus(-s)).sum() + ((1.0 - y) * softplus(s)).sum())
    sig = sigmoid(s)
    ds = pos_weight * y * (sig - 1.0) + (1.0 - y) * sig
    dH = np.broadcast_to(ds, H.shape).copy()
    enc_grad = encode_backward(cache, dH, scorer.encoder)
    return loss, EncoderScorer(enc_grad, np.array([ds.sum()]))
