"""Optimization loop, checkpointing, and evaluation driving.

Everything is deterministic under a fixed seed: batch order, dropout masks,
and parameter initialization all draw from generators seeded by the run
config, so identical (seed, data, config) runs produce bitwise-identical
checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import metrics
from .data import build_batches

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 1000
    epochs: int = 50
    seed: int = 0
    patience: int = 10  # early stop on dev F1 at threshold 0.5
    eval_threshold: float = 0.5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state, lr):
    """One bias-corrected Adam update over every trainable tensor."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = p.grad
        if np.any(np.isnan(g)):
            raise FloatingPointError(f"NaN gradient in parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = state.m[name] / (1 - b1 ** state.step)
        v_hat = state.v[name] / (1 - b2 ** state.step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def train_epoch(model, batches, state, cfg, rng):
    """Forward, backward, and Adam step per batch; returns the mean loss."""
    losses = []
    for batch in batches:
        model.zero_grads()
        with ad.Tape() as tape:
            loss = model.loss(batch, mode="train", rng=rng)
            tape.backward(loss)
        value = loss.item()
        if np.isnan(value):
            raise FloatingPointError("training loss diverged to NaN")
        adam_step(model.trainable_params(), state, cfg.learning_rate)
        losses.append(value)
    return float(np.mean(losses))


def evaluate(model, samples, threshold=0.5, mrr_convention="per_pair"):
    """Score every sample once in eval mode and build the full report."""
    scores = model.score_samples(samples)
    gold_sets = [s.gold_types for s in samples]
    kinds = [s.mention_kind for s in samples]
    return metrics.build_report(
        list(scores), gold_sets, kinds, model.tv,
        threshold=threshold, adjacency=model.adjacency,
        mrr_convention=mrr_convention,
    )


def train(model, train_samples, cfg, dev_samples=None, log=None):
    """Run the optimization loop with best-checkpoint retention.

    Early stopping watches dev macro F1 at the 0.5 threshold with
    cfg.patience; without a dev set, the loop runs all epochs and the final
    state is kept. Returns a list of per-epoch log records.
    """
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    history = []
    best_f1, best_state, since_best = -1.0, None, 0
    for epoch in range(cfg.epochs):
        batches = build_batches(
            train_samples, cfg.batch_size, rng, model.wv, model.tv, model.cfg.limits()
        )
        mean_loss = train_epoch(model, batches, state, cfg, rng)
        record = {"epoch": epoch, "loss": mean_loss}
        if dev_samples is not None:
            report = evaluate(model, dev_samples, cfg.eval_threshold)
            record["dev_f1"] = report.f1
            if report.f1 > best_f1:
                best_f1 = report.f1
                best_state = model.state_dict()
                since_best = 0
            else:
                since_best += 1
        history.append(record)
        if log is not None:
            log.write(json.dumps(record) + "\n")
        if dev_samples is not None and since_best > cfg.patience:
            break
    if best_state is not None:
        model.load_state(best_state)
    return history


def checkpoint_save(path, model, cfg):
    """Write parameters, config snapshot, and the adjacency fingerprint."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "params": {
            name: {"shape": list(t.data.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in model.params.items()
        },
        "config": {"model": asdict(model.cfg), "train": asdict(cfg)},
        "graph_hash": model.adjacency.fingerprint(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def checkpoint_load(path, model, force=False):
    """Restore parameters into an existing model, validating shapes and the
    adjacency fingerprint (override with force)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint version {doc.get('version')} != {CHECKPOINT_VERSION}"
        )
    if doc["graph_hash"] != model.adjacency.fingerprint() and not force:
        raise ValueError("adjacency fingerprint mismatch; pass force=True to override")
    state = {}
    for name, entry in doc["params"].items():
        data = np.array(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(entry["shape"])):
            raise ValueError(f"corrupt checkpoint entry for {name!r}")
        state[name] = data.reshape(entry["shape"])
    model.load_state(state)
    return doc
