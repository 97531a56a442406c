"""Type scores, multi-task granularity loss, and thresholded decisions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import labelgraph
from .data import GRANULARITIES

# 50 equal-interval decision thresholds in (0, 1].
THRESHOLD_GRID = np.round(np.linspace(0.02, 1.0, 50), 10)


@dataclass
class Prediction:
    scores: np.ndarray
    chosen: set
    threshold: float
    used_fallback: bool = False


def logits(f, W_o, T, adj, prop_cfg, word_aff=None, lam_raw=None, propagation_enabled=True):
    """Scores for every type: f @ W'_o^T, or f @ W_o^T with propagation off.

    No per-type bias: type vectors are the sole per-type parameters.
    """
    if propagation_enabled:
        Wp = labelgraph.propagate(W_o, T, adj, prop_cfg, word_aff, lam_raw)
    else:
        Wp = W_o
    return ad.matmul(f, ad.transpose(Wp))


def probabilities(z):
    return ad.activation(z, "sigmoid")


def group_weight_matrix(gold, tv):
    """Per-element loss weights for the multi-task granularity objective.

    weight[b, n] = 1 iff sample b has at least one gold type in the
    granularity group that type n belongs to. Inactive groups therefore
    contribute nothing, which avoids penalizing false negatives there.
    """
    B, N = gold.shape
    weights = np.zeros((B, N))
    for g in GRANULARITIES:
        idx = tv.group_indices(g)
        if idx.size == 0:
            continue
        active = gold[:, idx].sum(axis=1) > 0  # [B]
        weights[np.ix_(active, idx)] = 1.0
    return weights


def multitask_loss(probs, gold, tv):
    """Mean over samples of the summed per-group binary cross-entropies."""
    if np.any(gold.sum(axis=1) == 0):
        raise ValueError("sample with empty gold set")
    weights = group_weight_matrix(gold, tv)
    losses = ad.bce_elementwise(probs, gold)
    total = ad.sum_all(ad.mul(losses, weights))
    return ad.mul(total, 1.0 / gold.shape[0])


def decide(scores, threshold, tv, fallback=True):
    """All types scoring >= threshold; argmax singleton if nothing clears it."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    scores = np.asarray(scores)
    hits = np.nonzero(scores >= threshold)[0]
    used_fallback = False
    if hits.size == 0 and fallback:
        hits = np.array([int(scores.argmax())])
        used_fallback = True
    chosen = {tv.names[i] for i in hits}
    return Prediction(scores, chosen, threshold, used_fallback)


def tune_threshold(score_rows, gold_sets, tv):
    """Grid-search the 50-point threshold grid for best macro F1 on dev.

    Ties break toward the larger threshold (higher precision).
    """
    from .metrics import macro_prf  # local import: metrics also imports decide

    if len(score_rows) == 0:
        raise ValueError("empty dev set")
    best_t, best_f1 = THRESHOLD_GRID[0], -1.0
    for t in THRESHOLD_GRID:
        preds = [decide(s, t, tv).chosen for s in score_rows]
        _, _, f1 = macro_prf(preds, gold_sets)
        if f1 >= best_f1:
            best_f1, best_t = f1, float(t)
    return best_t, best_f1
