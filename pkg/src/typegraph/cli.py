"""Command-line surface binding the modules into reproducible experiments.

Runs are config-file-first (JSON) with flag overrides. Every subcommand
writes an effective-config JSON next to its outputs, and every artifact
embeds the seed and config hash. Exit codes: 0 success, 1 validation
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import classifier, labelgraph, report, synthetic, trainer
from .data import DataError, load_dataset, load_embeddings, load_type_vocab
from .model import Model, ModelConfig
from .trainer import TrainConfig

VARIANT_FLAGS = {
    "symmetric": "symmetric",
    "row": "row_normalized",
    "row+word": "row_normalized_word",
}


class CliError(Exception):
    """Validation failure; maps to exit code 1."""


def _load_config(path):
    if path is None:
        raise CliError("missing required --config")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed config {path}: {exc}")


def _effective_config(cfg, args):
    """Apply flag overrides onto the config document."""
    cfg = json.loads(json.dumps(cfg))  # deep copy
    model = cfg.setdefault("model", {})
    train = cfg.setdefault("train", {})
    if args.seed is not None:
        train["seed"] = args.seed
    if getattr(args, "threshold", None) is not None:
        train["eval_threshold"] = args.threshold
    if getattr(args, "variant", None) is not None:
        model["variant"] = VARIANT_FLAGS[args.variant]
    if getattr(args, "no_propagation", False):
        model["propagation_enabled"] = False
    if getattr(args, "no_word_affinity", False) and model.get(
        "variant", "row_normalized_word"
    ) == "row_normalized_word":
        model["variant"] = "row_normalized"
    if getattr(args, "no_interaction", False):
        model["interaction_enabled"] = False
    if getattr(args, "residual", False):
        model["use_residual"] = True
    return cfg


def _config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]


def _write_effective_config(cfg, out_dir, name):
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.effective-config.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
    return path


def _load_inputs(cfg, need_dev=False):
    data = cfg.get("data", {})
    for key in ("train", "embeddings", "types"):
        if key not in data:
            raise CliError(f"config missing data.{key}")
    try:
        tv = load_type_vocab(data["types"])
        wv = load_embeddings(data["embeddings"], int(data["embedding_dim"]))
        train_samples, load_report = load_dataset(data["train"], tv)
        dev_samples = None
        if need_dev:
            if "dev" not in data:
                raise CliError("config missing data.dev")
            dev_samples, _ = load_dataset(data["dev"], tv)
    except FileNotFoundError as exc:
        raise CliError(f"missing input file: {exc.filename}")
    except DataError as exc:
        raise CliError(str(exc))
    return tv, wv, train_samples, dev_samples, load_report


def _build_model(cfg, tv, wv, train_samples, seed):
    model_cfg = ModelConfig(**cfg.get("model", {}))
    adjacency = labelgraph.build_cooccurrence(train_samples, tv)
    return Model(model_cfg, wv, tv, adjacency, seed=seed), adjacency


def cmd_build_graph(args):
    cfg = _effective_config(_load_config(args.config), args)
    out_dir = Path(cfg.get("output_dir", "."))
    tv, wv, train_samples, _, _ = _load_inputs(cfg)
    adjacency = labelgraph.build_cooccurrence(train_samples, tv)
    _write_effective_config(cfg, out_dir, "build-graph")

    edges_path = out_dir / "graph-edges.tsv"
    with open(edges_path, "w", encoding="utf-8") as fh:
        for i in range(adjacency.n):
            for j in range(i + 1, adjacency.n):
                if adjacency.counts[i, j] > 0:
                    fh.write(f"{i}\t{j}\t{int(adjacency.counts[i, j])}\n")
    degrees = adjacency.degrees
    hist, edges = np.histogram(degrees, bins=min(20, adjacency.n))
    stats = {
        "seed": cfg.get("train", {}).get("seed", 0),
        "config_hash": _config_hash(cfg),
        "node_count": adjacency.n,
        "edge_count": int((adjacency.counts > 0).sum() // 2),
        "degree_histogram": {
            "counts": hist.tolist(),
            "bin_edges": edges.tolist(),
        },
    }
    with open(out_dir / "graph-stats.json", "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2)
    report.plot_degree_histogram(adjacency, out_dir / "graph-degrees.png")
    print(f"wrote {edges_path} ({stats['edge_count']} edges over {adjacency.n} nodes)")
    return 0


def cmd_train(args):
    cfg = _effective_config(_load_config(args.config), args)
    out_dir = Path(cfg.get("output_dir", "."))
    tv, wv, train_samples, dev_samples, _ = _load_inputs(
        cfg, need_dev="dev" in cfg.get("data", {})
    )
    train_cfg = TrainConfig(**cfg.get("train", {}))
    model, _ = _build_model(cfg, tv, wv, train_samples, train_cfg.seed)
    _write_effective_config(cfg, out_dir, "train")

    log_path = out_dir / "train-log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"seed": train_cfg.seed, "config_hash": _config_hash(cfg)}) + "\n")
        history = trainer.train(model, train_samples, train_cfg, dev_samples, log=fh)
    trainer.checkpoint_save(out_dir / "checkpoint.json", model, train_cfg)
    report.plot_training_log(history, out_dir / "train-loss.png")
    print(f"trained {len(history)} epochs; final loss {history[-1]['loss']:.6f}")
    return 0


def _restore_model(cfg, args, need_dev=True):
    tv, wv, train_samples, dev_samples, _ = _load_inputs(cfg, need_dev=need_dev)
    train_cfg = TrainConfig(**cfg.get("train", {}))
    model, _ = _build_model(cfg, tv, wv, train_samples, train_cfg.seed)
    ckpt = cfg.get("checkpoint", str(Path(cfg.get("output_dir", ".")) / "checkpoint.json"))
    try:
        trainer.checkpoint_load(ckpt, model, force=getattr(args, "force", False))
    except FileNotFoundError:
        raise CliError(f"checkpoint not found: {ckpt}")
    except ValueError as exc:
        raise CliError(str(exc))
    return model, dev_samples, train_cfg


def cmd_eval(args):
    cfg = _effective_config(_load_config(args.config), args)
    out_dir = Path(cfg.get("output_dir", "."))
    model, dev_samples, train_cfg = _restore_model(cfg, args)
    _write_effective_config(cfg, out_dir, "eval")
    rep = trainer.evaluate(model, dev_samples, train_cfg.eval_threshold)
    rep.extra["seed"] = train_cfg.seed
    rep.extra["config_hash"] = _config_hash(cfg)
    report.write_eval_report(rep, out_dir / "eval-report.json")
    report.plot_pr_curve(rep.pr_curve, out_dir / "eval-pr.png")
    print(
        f"threshold {rep.threshold:.2f}: P {rep.precision:.4f} R {rep.recall:.4f} "
        f"F1 {rep.f1:.4f} MRR {rep.mrr:.4f}"
    )
    return 0


def cmd_predict(args):
    cfg = _effective_config(_load_config(args.config), args)
    out_dir = Path(cfg.get("output_dir", "."))
    model, dev_samples, train_cfg = _restore_model(cfg, args)
    _write_effective_config(cfg, out_dir, "predict")
    threshold = train_cfg.eval_threshold
    scores = model.score_samples(dev_samples)
    out_path = out_dir / "predictions.jsonl"
    topk = min(10, len(model.tv))
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"seed": train_cfg.seed, "config_hash": _config_hash(cfg)}) + "\n")
        for s, row in zip(dev_samples, scores):
            pred = classifier.decide(row, threshold, model.tv)
            order = np.argsort(-row, kind="stable")[:topk]
            fh.write(json.dumps({
                "mention": " ".join(s.mention),
                "chosen_types": sorted(pred.chosen),
                "scores_topk": {model.tv.names[i]: float(row[i]) for i in order},
            }) + "\n")
    print(f"wrote {out_path} ({len(dev_samples)} predictions)")
    return 0


def cmd_pr_curve(args):
    cfg = _effective_config(_load_config(args.config), args)
    out_dir = Path(cfg.get("output_dir", "."))
    model, dev_samples, train_cfg = _restore_model(cfg, args)
    _write_effective_config(cfg, out_dir, "pr-curve")
    rep = trainer.evaluate(model, dev_samples, train_cfg.eval_threshold)
    csv_path = out_dir / "pr-curve.csv"
    report.write_pr_csv(rep.pr_curve, csv_path)
    report.plot_pr_curve(rep.pr_curve, out_dir / "pr-curve.png")
    print(f"wrote {csv_path} ({len(rep.pr_curve)} rows)")
    return 0


def build_gradcheck_toy(seed=0, scale=0.4):
    """Tiny but complete model for gradient checking: 20-word vocabulary,
    6 types, context feature width 8.

    Parameters are drawn wider than the training default (scale 0.4) so
    every gradient element clears the float64 cancellation floor of the
    finite differences.
    """
    from .data import Sample, TypeVocabulary, WordVocabulary, build_batches

    rng = np.random.default_rng(seed)
    tv = TypeVocabulary(
        ["g0", "g1", "f0", "f1", "u0", "u1"],
        ["general", "general", "fine", "fine", "ultra", "ultra"],
    )
    tokens = [f"w{i}" for i in range(20)]
    matrix = np.vstack([np.zeros(5), np.zeros(5), rng.normal(0, 0.5, (20, 5))])
    matrix[0] = matrix[2:].mean(axis=0)
    wv = WordVocabulary(["<unk>", "<pad>"] + tokens, matrix)
    samples = [
        Sample(["w0", "w1"], ["w2"], ["w3"], {"g0", "f0", "u0"}),
        Sample(["w4"], ["w5", "w6"], ["w7", "w8"], {"g1", "f1"}),
        Sample(["w9", "w10", "w11"], ["w12"], [], {"g0", "f1", "u1"}),
    ]
    cfg = ModelConfig(
        pos_dim=3, hidden=4, char_dim=3, char_filters=4, char_width=3,
        dropout_context=0.0, dropout_mention=0.0, dropout_fused=0.0,
    )
    adjacency = labelgraph.build_cooccurrence(samples, tv)
    model = Model(cfg, wv, tv, adjacency, seed=seed)
    for name in model.trainable:
        if name != "lam_raw":
            model.params[name].data *= scale / 0.1
    batch = build_batches(
        samples, len(samples), np.random.default_rng(seed), wv, tv, cfg.limits()
    )[0]
    return model, batch


def cmd_gradcheck(args):
    """Finite-difference check of the end-to-end loss on a builtin toy model."""
    seed = args.seed if args.seed is not None else 0
    model, batch = build_gradcheck_toy(seed)
    results = ad.finite_diff_check(
        lambda: model.loss(batch, mode="eval"), model.trainable_params(), h=1e-4
    )
    worst = results.pop("worst")
    for name in sorted(results):
        print(f"{name}: {results[name]:.3e}")
    passed = worst < 1e-4
    print(f"{'PASS' if passed else 'FAIL'}: worst relative error {worst:.3e}")
    return 0 if passed else 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="typegraph",
        description="Multi-label entity typing with a label co-occurrence graph layer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpointed=False):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--threshold", type=float)
        p.add_argument(
            "--variant", choices=sorted(VARIANT_FLAGS), help="propagation variant"
        )
        p.add_argument("--no-propagation", action="store_true")
        p.add_argument("--no-word-affinity", action="store_true")
        p.add_argument("--no-interaction", action="store_true")
        p.add_argument("--residual", action="store_true")
        if checkpointed:
            p.add_argument("--force", action="store_true",
                           help="ignore adjacency fingerprint mismatch")

    common(sub.add_parser("build-graph", help="emit co-occurrence edges and stats"))
    common(sub.add_parser("train", help="train and checkpoint a model"))
    common(sub.add_parser("eval", help="full evaluation report"), checkpointed=True)
    common(sub.add_parser("predict", help="JSONL predictions"), checkpointed=True)
    common(sub.add_parser("pr-curve", help="50-row PR sweep"), checkpointed=True)
    g = sub.add_parser("gradcheck", help="finite-difference check on a toy model")
    g.add_argument("--seed", type=int)
    return parser


COMMANDS = {
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "pr-curve": cmd_pr_curve,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
