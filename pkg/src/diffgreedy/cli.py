"""Command-line entry point.

Every command reads defaults, then an optional ``--config`` file of
``key = value`` lines, then explicit flags (last one wins). Commands that
write a file also write the fully resolved configuration to ``<out>.config``;
feeding that file back through ``--config`` reproduces the run exactly.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 failed
verification (``oracle-check``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checks
from .data import (
    SynthConfig,
    featurize_records,
    generate_synthetic,
    load_embeddings,
    read_dataset,
    read_raw_claims,
    write_dataset,
)
from .errors import ContractViolation, DomainError, FormatError
from .evaluation import (
    BASELINES,
    evaluate_prefixes,
    format_trace,
    metrics_table,
    run_baseline,
    select_dgn,
    trace_selection,
    trace_to_lines,
)
from .network import DgnParams, EncoderScorer, identity_params
from .serialize import format_float, params_from_json, params_to_json
from .training import Hyperparams, train, train_encoder

log = logging.getLogger("diffgreedy")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# flat key = value config files


def parse_value(text: str):
    text = text.strip()
    if text.startswith('"'):
        return json.loads(text)
    low = text.lower()
    if low in ("none", "null"):
        return None
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    return json.dumps(str(value))


def read_config(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = parse_value(value)
    return out


def write_config(path, cfg: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {format_value(cfg[key])}\n")


# --------------------------------------------------------------------------
# command option tables: (key, default, type, help)

_OUT = ("out", None, str, "output path")
_SEED = ("seed", 0, int, "random seed")
_THREADS = ("threads", 1, int, "worker threads for per-instance work")

OPTIONS = {
    "synth": [
        ("n_instances", 200, int, "number of claims"),
        ("D", 12, int, "candidate sentences per claim"),
        ("F", 16, int, "feature dimension"),
        ("n_evidence", 2, int, "evidence sentences per claim"),
        ("noise_sigma", 0.1, float, "noise level"),
        ("n_hubs", 3, int, "broad distractors per claim"),
        ("block_size", 4, int, "features per claim facet"),
        ("hub_strength_min", 0.42, float, ""),
        ("hub_strength_max", 0.50, float, ""),
        ("evidence_strength_min", 0.95, float, ""),
        ("evidence_strength_max", 1.05, float, ""),
        ("duplicate_scale", 0.9, float, ""),
        _SEED,
        _OUT,
    ],
    "featurize": [
        ("input", None, str, "raw claims, one JSON object per line"),
        ("embeddings", None, str, "text embedding table"),
        _OUT,
    ],
    "train": [
        ("data", None, str, "training dataset"),
        ("val", None, str, "validation dataset"),
        ("model_type", "dgn", str, "dgn | encoder | deep_encoder"),
        ("learning_rate", 1e-3, float, ""),
        ("tau", 3.0, float, "softmax temperature"),
        ("tau_anneal", "none", str, "none | anneal"),
        ("k", 7, int, "greedy layers / selection budget"),
        ("epochs", 20, int, ""),
        ("batch_size", 16, int, ""),
        ("hidden_dim", 64, int, ""),
        ("out_dim", 32, int, ""),
        ("encoder_layers", None, int, "1, 2 or 3 (default 2; 3 for deep_encoder)"),
        ("pos_weight", 5.0, float, "evidence weight for the encoder baselines"),
        ("max_grad_norm", None, float, ""),
        _SEED,
        _THREADS,
        _OUT,
    ],
    "eval": [
        ("data", None, str, "dataset to score"),
        ("model", None, str, "parameter file"),
        ("baseline", None, str, "topk_cosine | greedy_untrained | encoder_only"),
        ("k", 7, int, "largest budget reported"),
        _THREADS,
        _OUT,
    ],
    "trace": [
        ("data", None, str, "dataset"),
        ("model", None, str, "parameter file (default: untrained greedy on ReLU(X))"),
        ("claim_id", None, str, "claim to trace"),
        ("k", 7, int, ""),
        _OUT,
    ],
    "oracle-check": [
        ("instances", 100, int, "instances per check"),
        _SEED,
        _OUT,
    ],
}
OPTIONS["select"] = OPTIONS["eval"]

HELP = {
    "synth": "generate a planted-evidence dataset",
    "featurize": "build a dataset from raw text and an embedding table",
    "train": "train the greedy network or an encoder baseline",
    "eval": "precision/recall/F1 at 1..k for a model or baseline",
    "select": "write per-claim selections",
    "trace": "per-layer marginal gains for one claim",
    "oracle-check": "randomized verification against exhaustive and finite-difference oracles",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diffgreedy", description="Differentiable greedy subset selection.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, opts in OPTIONS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="key = value file; flags override it")
        for key, _default, typ, text in opts:
            flags = ["--" + key.replace("_", "-")]
            if key == "k":
                flags.insert(0, "-k")
            p.add_argument(*flags, dest=key, type=typ, default=argparse.SUPPRESS, help=text or None)
    return parser


def resolve(command: str, args: argparse.Namespace) -> dict:
    opts = OPTIONS[command]
    cfg = {key: default for key, default, _, _ in opts}
    if getattr(args, "config", None):
        from_file = read_config(args.config)
        unknown = sorted(set(from_file) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        types = {key: typ for key, _, typ, _ in opts}
        for key, value in from_file.items():
            if value is not None and types[key] is float and isinstance(value, int):
                value = float(value)
            cfg[key] = value
    for key, *_ in opts:
        if hasattr(args, key):
            cfg[key] = getattr(args, key)
    for key in ("k", "threads"):
        if key in cfg and not (isinstance(cfg[key], int) and cfg[key] >= 1):
            raise UsageError(f"--{key} must be a positive integer, got {cfg[key]!r}")
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def _load_model(path):
    kind, arrays = params_from_json(Path(path).read_text(encoding="utf-8"))
    try:
        if kind == "dgn":
            return DgnParams.from_named(arrays)
        if kind == "encoder":
            return EncoderScorer.from_named(arrays)
    except (KeyError, ContractViolation) as exc:
        raise FormatError(f"{path}: inconsistent parameter blocks ({exc})") from None
    raise FormatError(f"{path}: unknown model kind {kind!r}")


# --------------------------------------------------------------------------
# commands


def cmd_synth(cfg):
    _require(cfg, "out")
    try:
        config = SynthConfig(
            n_instances=cfg["n_instances"],
            D=cfg["D"],
            F=cfg["F"],
            n_evidence=cfg["n_evidence"],
            noise_sigma=cfg["noise_sigma"],
            n_hubs=cfg["n_hubs"],
            block_size=cfg["block_size"],
            hub_strength=(cfg["hub_strength_min"], cfg["hub_strength_max"]),
            evidence_strength=(cfg["evidence_strength_min"], cfg["evidence_strength_max"]),
            duplicate_scale=cfg["duplicate_scale"],
        )
        config.validate()
    except ContractViolation as exc:
        raise UsageError(str(exc)) from None
    data = generate_synthetic(config, cfg["seed"])
    write_dataset(cfg["out"], data)
    write_config(cfg["out"] + ".config", cfg)
    print(f"wrote {len(data)} instances to {cfg['out']}")
    return EXIT_OK


def cmd_featurize(cfg):
    _require(cfg, "input", "embeddings", "out")
    table = load_embeddings(cfg["embeddings"])
    data = featurize_records(read_raw_claims(cfg["input"]), table)
    write_dataset(cfg["out"], data)
    write_config(cfg["out"] + ".config", cfg)
    print(f"wrote {len(data)} instances (F={table.dim}) to {cfg['out']}")
    return EXIT_OK


def cmd_train(cfg):
    _require(cfg, "data", "out")
    model_type = cfg["model_type"]
    if model_type not in ("dgn", "encoder", "deep_encoder"):
        raise UsageError(f"unknown model type {model_type!r}")
    layers = cfg["encoder_layers"] or (3 if model_type == "deep_encoder" else 2)
    try:
        hyper = Hyperparams(
            learning_rate=cfg["learning_rate"],
            tau=cfg["tau"],
            tau_anneal=cfg["tau_anneal"],
            k=cfg["k"],
            epochs=cfg["epochs"],
            batch_size=cfg["batch_size"],
            hidden_dim=cfg["hidden_dim"],
            out_dim=cfg["out_dim"],
            encoder_layers=layers,
            seed=cfg["seed"],
            pos_weight=cfg["pos_weight"],
            max_grad_norm=cfg["max_grad_norm"],
        )
    except ContractViolation as exc:
        raise UsageError(str(exc)) from None
    data = read_dataset(cfg["data"])
    val = read_dataset(cfg["val"]) if cfg["val"] else None
    if model_type == "dgn":
        params, history = train(data, hyper, validation=val, threads=cfg["threads"])
        kind = "dgn"
    else:
        params, history = train_encoder(data, hyper, validation=val, threads=cfg["threads"])
        kind = "encoder"
    Path(cfg["out"]).write_text(params_to_json(kind, params), encoding="utf-8")
    _write_lines(cfg["out"] + ".history.jsonl", history.to_lines())
    write_config(cfg["out"] + ".config", cfg)
    if history.skipped:
        print(f"skipped {history.skipped} unlabeled instance(s)")
    if history.records:
        last = history.records[-1]
        print(f"final epoch {last.epoch}: loss {last.mean_train_loss:.6f} val_recall@{hyper.k} {last.val_recall}")
    print(f"wrote {kind} parameters to {cfg['out']}")
    return EXIT_OK


def _check_scorer_args(cfg):
    if cfg["model"] is None and cfg["baseline"] is None:
        raise UsageError("give --model or --baseline")
    if cfg["baseline"] is not None and cfg["baseline"] not in BASELINES:
        raise UsageError(f"unknown baseline {cfg['baseline']!r}; expected one of {', '.join(BASELINES)}")


def _selections(cfg, data):
    model = _load_model(cfg["model"]) if cfg["model"] else None
    baseline = cfg["baseline"]
    if baseline is None:
        if isinstance(model, EncoderScorer):
            return "encoder_only", run_baseline("encoder_only", data, cfg["k"], model, cfg["threads"])
        return "dgn", select_dgn(data, model, cfg["k"], cfg["threads"])
    if baseline == "encoder_only" and not isinstance(model, EncoderScorer):
        raise UsageError("--baseline encoder_only needs --model pointing at a trained encoder")
    return baseline, run_baseline(baseline, data, cfg["k"], model, cfg["threads"])


def cmd_eval(cfg):
    _require(cfg, "data")
    _check_scorer_args(cfg)
    data = read_dataset(cfg["data"])
    name, sels = _selections(cfg, data)
    rows = evaluate_prefixes(sels, [inst.labels for inst in data], cfg["k"])
    print(metrics_table([(name, m) for m in rows]))
    if cfg["out"]:
        _write_lines(cfg["out"], [m.to_line() for m in rows])
        write_config(cfg["out"] + ".config", cfg)
    return EXIT_OK


def cmd_select(cfg):
    _require(cfg, "data")
    _check_scorer_args(cfg)
    data = read_dataset(cfg["data"])
    _, sels = _selections(cfg, data)
    lines = [
        json.dumps({"claim_id": inst.claim_id, "selection": sel, "sentence_ids": [inst.sentence_ids[i] for i in sel]})
        for inst, sel in zip(data, sels)
    ]
    if cfg["out"]:
        _write_lines(cfg["out"], lines)
        write_config(cfg["out"] + ".config", cfg)
    else:
        print("\n".join(lines))
    return EXIT_OK


def cmd_trace(cfg):
    _require(cfg, "data", "claim_id")
    data = read_dataset(cfg["data"])
    matches = [inst for inst in data if inst.claim_id == cfg["claim_id"]]
    if not matches:
        raise FormatError(f"claim id {cfg['claim_id']!r} not found in {cfg['data']}")
    inst = matches[0]
    params = _load_model(cfg["model"]) if cfg["model"] else identity_params(inst.F)
    if not isinstance(params, DgnParams):
        raise UsageError("trace needs a greedy-network parameter file")
    traces = trace_selection(inst.X, params, cfg["k"])
    print(f"claim {inst.claim_id} labels {[inst.sentence_ids[i] for i in inst.labels]}")
    print(format_trace(traces, list(inst.sentence_ids)))
    if cfg["out"]:
        _write_lines(cfg["out"], trace_to_lines(traces))
        write_config(cfg["out"] + ".config", cfg)
    return EXIT_OK


def cmd_oracle_check(cfg):
    if cfg["instances"] < 1:
        raise UsageError("--instances must be >= 1")
    results = checks.run_all(cfg["instances"], cfg["seed"])
    lines = [r.line() for r in results]
    ok = all(r.passed for r in results)
    lines.append("ALL PASS" if ok else "VERIFICATION FAILED")
    print("\n".join(lines))
    if cfg["out"]:
        _write_lines(cfg["out"], lines)
        write_config(cfg["out"] + ".config", cfg)
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "eval": cmd_eval,
    "select": cmd_select,
    "trace": cmd_trace,
    "oracle-check": cmd_oracle_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ContractViolation, DomainError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
