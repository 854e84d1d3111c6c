"""Embedding tables, claim/sentence featurization, synthetic data and dataset files."""

from __future__ import annotations

import json
import string
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractViolation, FormatError
from .serialize import format_array


@dataclass
class EmbeddingTable:
    vectors: dict
    dim: int

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, token):
        return token in self.vectors

    def __getitem__(self, token):
        return self.vectors[token]


def load_embeddings(path) -> EmbeddingTable:
    """Read a text embedding file: ``token v1 ... vF`` per line.

    An optional first line ``count dim`` is accepted and ignored beyond its
    dimension. Repeated tokens keep their first vector.
    """
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            token, values = parts[0], parts[1:]
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"non-numeric embedding value ({exc})", lineno) from None
            if dim is None:
                if vec.size == 0:
                    raise FormatError(f"token {token!r} has no values", lineno)
                dim = vec.size
            if vec.size != dim:
                raise FormatError(f"token {token!r} has {vec.size} values, expected {dim}", lineno)
            vectors.setdefault(token, vec)
    if not vectors:
        raise FormatError(f"no embeddings found in {path}")
    return EmbeddingTable(vectors, dim)


_PUNCT = string.punctuation + "“”‘’"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip surrounding punctuation."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


def mean_pool(tokens, table: EmbeddingTable) -> np.ndarray:
    """Average of in-vocabulary vectors; the zero vector if none are known."""
    vecs = [table[t] for t in tokens if t in table]
    if not vecs:
        return np.zeros(table.dim)
    return np.mean(vecs, axis=0)


def pooled_vectors(claim_tokens, sentences, table: EmbeddingTable):
    claim = mean_pool(claim_tokens, table)
    sents = np.stack([mean_pool(s, table) for s in sentences], axis=1) if sentences else np.zeros((table.dim, 0))
    return claim, sents


def featurize(claim_tokens, sentences, table: EmbeddingTable) -> np.ndarray:
    """Column ``d`` is ``meanpool(claim) * meanpool(sentence_d)`` elementwise."""
    claim, sents = pooled_vectors(claim_tokens, sentences, table)
    return claim[:, None] * sents


# --------------------------------------------------------------------------
# instances and files


@dataclass(eq=False)
class ClaimInstance:
    """One claim with its ``D`` candidate sentences.

    ``labels`` are 0-based column indices of the evidence sentences, in the
    order they are paired with greedy layers during training. The pooled
    claim/sentence vectors are optional and only feed the cosine baseline.
    """

    claim_id: str
    X: np.ndarray
    labels: tuple
    sentence_ids: tuple
    claim_vec: np.ndarray | None = None
    sentence_vecs: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.labels = tuple(int(i) for i in self.labels)
        self.sentence_ids = tuple(str(s) for s in self.sentence_ids)
        if self.X.ndim != 2:
            raise ContractViolation(f"{self.claim_id}: X must be 2-D, got shape {self.X.shape}")
        D = self.X.shape[1]
        if len(self.sentence_ids) != D:
            raise ContractViolation(f"{self.claim_id}: {len(self.sentence_ids)} sentence ids for D={D}")
        if len(set(self.labels)) != len(self.labels):
            raise ContractViolation(f"{self.claim_id}: duplicate labels {self.labels}")
        for i in self.labels:
            if not 0 <= i < D:
                raise ContractViolation(f"{self.claim_id}: label {i} out of range for D={D}")
        if (self.claim_vec is None) != (self.sentence_vecs is None):
            raise ContractViolation(f"{self.claim_id}: pooled vectors must be given together")
        if self.claim_vec is not None:
            self.claim_vec = np.asarray(self.claim_vec, dtype=np.float64)
            self.sentence_vecs = np.asarray(self.sentence_vecs, dtype=np.float64)
            if self.sentence_vecs.shape != (self.claim_vec.size, D):
                raise ContractViolation(
                    f"{self.claim_id}: sentence vectors {self.sentence_vecs.shape} do not match "
                    f"claim dim {self.claim_vec.size} and D={D}"
                )

    @property
    def F(self) -> int:
        return self.X.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ClaimInstance):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.claim_id == other.claim_id
            and self.labels == other.labels
            and self.sentence_ids == other.sentence_ids
            and same(self.X, other.X)
            and same(self.claim_vec, other.claim_vec)
            and same(self.sentence_vecs, other.sentence_vecs)
        )


def instance_to_line(inst: ClaimInstance) -> str:
    parts = [
        f'"claim_id":{json.dumps(inst.claim_id)}',
        f'"shape":[{inst.F},{inst.D}]',
        f'"X":{format_array(inst.X)}',
        f'"labels":{json.dumps(list(inst.labels))}',
        f'"sentence_ids":{json.dumps(list(inst.sentence_ids))}',
    ]
    if inst.claim_vec is not None:
        parts.append(f'"claim_vec":{format_array(inst.claim_vec)}')
        parts.append(f'"sentence_vecs":{format_array(inst.sentence_vecs)}')
    return "{" + ",".join(parts) + "}"


def instance_from_record(rec: dict, lineno: int | None = None) -> ClaimInstance:
    try:
        F, D = (int(v) for v in rec["shape"])
        X = np.array(rec["X"], dtype=np.float64)
        if X.size != F * D:
            raise FormatError(f"X has {X.size} values, shape says {F}x{D}", lineno)
        labels = rec["labels"]
        if any(not isinstance(i, int) or isinstance(i, bool) for i in labels):
            raise FormatError(f"labels must be integers, got {labels}", lineno)
        bad = [i for i in labels if not 0 <= i < D]
        if bad:
            raise FormatError(f"label index {bad[0]} out of range for D={D}", lineno)
        claim_vec = sentence_vecs = None
        if "claim_vec" in rec:
            claim_vec = np.array(rec["claim_vec"], dtype=np.float64)
            sentence_vecs = np.array(rec["sentence_vecs"], dtype=np.float64).reshape(claim_vec.size, D)
        return ClaimInstance(
            str(rec["claim_id"]),
            X.reshape(F, D),
            labels,
            rec["sentence_ids"],
            claim_vec,
            sentence_vecs,
        )
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed record: {exc!r}", lineno) from None


def write_dataset(path, instances) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(instance_to_line(inst))
            fh.write("\n")


def read_dataset(path) -> list[ClaimInstance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(rec, dict):
                raise FormatError("record is not an object", lineno)
            out.append(instance_from_record(rec, lineno))
    return out


def featurize_records(records, table: EmbeddingTable) -> list[ClaimInstance]:
    """Turn raw ``{claim_id, claim, sentences, labels[, sentence_ids]}`` records into instances."""
    out = []
    for rec in records:
        sentences = [tokenize(s) for s in rec["sentences"]]
        claim_vec, sent_vecs = pooled_vectors(tokenize(rec["claim"]), sentences, table)
        ids = rec.get("sentence_ids") or [str(i) for i in range(len(sentences))]
        out.append(
            ClaimInstance(
                str(rec["claim_id"]),
                claim_vec[:, None] * sent_vecs,
                rec.get("labels", []),
                ids,
                claim_vec,
                sent_vecs,
            )
        )
    return out


def read_raw_claims(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(rec, dict) or "claim" not in rec or "sentences" not in rec:
                raise FormatError("raw record needs 'claim' and 'sentences'", lineno)
            rec.setdefault("claim_id", str(lineno))
            out.append(rec)
    return out


# --------------------------------------------------------------------------
# synthetic planted-evidence data


@dataclass
class SynthConfig:
    """Knobs of the planted-evidence generator.

    Each instance has ``n_evidence`` evidence sentences on disjoint feature
    blocks of the claim, one near-duplicate of the strongest evidence, and
    ``n_hubs`` broad distractors that touch every claim block weakly. The
    rest are noise sentences.
    """

    n_instances: int = 200
    D: int = 12
    F: int = 16
    n_evidence: int = 2
    noise_sigma: float = 0.1
    n_hubs: int = 3
    block_size: int = 4
    hub_strength: tuple = (0.42, 0.50)
    evidence_strength: tuple = (0.95, 1.05)
    duplicate_scale: float = 0.9

    def validate(self) -> None:
        if self.n_instances < 0:
            raise ContractViolation(f"n_instances must be >= 0, got {self.n_instances}")
        if self.n_evidence < 1 or self.n_evidence > self.D:
            raise ContractViolation(f"need 1 <= n_evidence <= D, got {self.n_evidence} and D={self.D}")
        if self.noise_sigma < 0:
            raise ContractViolation(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.n_hubs < 0:
            raise ContractViolation(f"n_hubs must be >= 0, got {self.n_hubs}")
        if self.n_evidence + 1 + self.n_hubs > self.D:
            raise ContractViolation(
                f"D={self.D} cannot hold {self.n_evidence} evidence, 1 duplicate and {self.n_hubs} hubs"
            )
        if self.block_size < 1 or self.n_evidence * self.block_size > self.F:
            raise ContractViolation(
                f"F={self.F} cannot hold {self.n_evidence} blocks of size {self.block_size}"
            )
        if not 0 < self.duplicate_scale <= 1:
            raise ContractViolation(f"duplicate_scale must be in (0, 1], got {self.duplicate_scale}")

    def to_dict(self) -> dict:
        return asdict(self)


DUPLICATE_MIN_COSINE = 0.95
# Expected claim alignment (cosine of pooled vectors) of evidence exceeds
# every distractor kind for noise_sigma up to this value under the default
# strengths; by 1.5 the duplicate overtakes. Checked by Monte Carlo in the tests.
ALIGNMENT_SIGMA_THRESHOLD = 1.0


def _cos(a, b) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def _synth_instance(cfg: SynthConfig, rng: np.random.Generator, idx: int) -> tuple[ClaimInstance, list[str]]:
    """One planted instance and the kind of each column (evidence, duplicate, hub, noise)."""
    F, D, b = cfg.F, cfg.D, cfg.block_size
    n_blocks = F // b
    blocks = rng.permutation(n_blocks)[: cfg.n_evidence]
    facet_rows = [np.arange(blk * b, (blk + 1) * b) for blk in blocks]
    on_claim = np.zeros(F, dtype=bool)
    for rows in facet_rows:
        on_claim[rows] = True
    off_claim = ~on_claim

    sign = rng.choice([-1.0, 1.0], size=F)
    claim = np.where(on_claim, sign * rng.uniform(0.8, 1.2, size=F), 0.0)

    def noise():
        return cfg.noise_sigma * rng.normal(size=F)

    evidence = []
    for rows in facet_rows:
        s = np.zeros(F)
        s[rows] = rng.uniform(*cfg.evidence_strength) * sign[rows]
        evidence.append(s + noise())
    # strongest evidence first: it pairs with the first greedy layer
    strength = [np.log1p(np.maximum(claim * s, 0.0)).sum() for s in evidence]
    order = np.argsort(-np.asarray(strength), kind="stable")
    evidence = [evidence[i] for i in order]

    # Off-claim words lower the duplicate's cosine to the claim but vanish in X.
    src = evidence[0]
    while True:
        off = np.where(off_claim, rng.normal(size=F), 0.0)
        scale = 1.5 * np.linalg.norm(cfg.duplicate_scale * src[on_claim]) / max(np.linalg.norm(off), 1e-12)
        dup = cfg.duplicate_scale * src + scale * off + np.where(on_claim, 0.3 * noise(), 0.0)
        if _cos(claim * dup, claim * src) >= DUPLICATE_MIN_COSINE or not off_claim.any():
            break

    hubs = []
    for _ in range(cfg.n_hubs):
        beta = rng.uniform(*cfg.hub_strength)
        hub = np.where(on_claim, beta * sign, 2.0 * beta * rng.choice([-1.0, 1.0], size=F))
        hubs.append(hub + noise())

    n_noise = D - len(evidence) - 1 - len(hubs)
    noise_cols = [noise() for _ in range(n_noise)]

    cols = evidence + [dup] + hubs + noise_cols
    perm = rng.permutation(D)
    S = np.empty((F, D))
    for j, col in zip(perm, cols):
        S[:, j] = col
    labels = [int(perm[i]) for i in range(len(evidence))]
    kinds = ["evidence"] * len(evidence) + ["duplicate"] + ["hub"] * len(hubs) + ["noise"] * n_noise
    column_kinds = [""] * D
    for j, kind in zip(perm, kinds):
        column_kinds[j] = kind
    inst = ClaimInstance(
        f"synth-{idx:05d}",
        claim[:, None] * S,
        labels,
        [f"s{d}" for d in range(D)],
        claim,
        S,
    )
    return inst, column_kinds


def generate_synthetic(config: SynthConfig | None = None, seed: int = 0) -> list[ClaimInstance]:
    """Planted-evidence instances, deterministic in ``seed``."""
    cfg = config or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    return [_synth_instance(cfg, rng, i)[0] for i in range(cfg.n_instances)]


def synthetic_column_kinds(config: SynthConfig | None = None, seed: int = 0) -> list[list[str]]:
    """Per-instance column kinds of ``generate_synthetic(config, seed)``."""
    cfg = config or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    return [_synth_instance(cfg, rng, i)[1] for i in range(cfg.n_instances)]
