"""Evaluation quantities: MRR, macro P/R/F1, PR curves, the co-occurrence
consistency audit, pronoun-decomposed F1, and strict/micro secondaries.

MRR convention: the mean is over (sample, gold type) pairs, with rank ties
broken by ascending type id. Published numbers may use a different
convention (e.g. best gold per sample); `mrr` takes a `convention` switch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import THRESHOLD_GRID, decide


@dataclass
class EvalReport:
    mrr: float
    precision: float
    recall: float
    f1: float
    threshold: float
    pr_curve: list  # 50 rows of (threshold, precision, recall, f1)
    f1_pronouns: float | None
    f1_other: float | None
    consistency_rate: float | None
    strict_accuracy: float
    micro_f1: float
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mrr": self.mrr,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "threshold": self.threshold,
            "pr_curve": [list(row) for row in self.pr_curve],
            "f1_pronouns": self.f1_pronouns,
            "f1_other": self.f1_other,
            "consistency_rate": self.consistency_rate,
            "strict_accuracy": self.strict_accuracy,
            "micro_f1": self.micro_f1,
            **self.extra,
        }


def _f1(p, r):
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def mrr(score_rows, gold_sets, tv, convention="per_pair"):
    """Mean reciprocal rank of gold types under descending-score order."""
    contributions = []
    for scores, gold in zip(score_rows, gold_sets):
        if not gold:
            raise ValueError("empty gold set")
        # Stable sort on -score: ties resolve toward the smaller type id.
        order = np.argsort(-np.asarray(scores), kind="stable")
        rank = np.empty(len(scores), dtype=np.intp)
        rank[order] = np.arange(1, len(scores) + 1)
        recips = [1.0 / rank[tv.index[t]] for t in gold]
        if convention == "per_pair":
            contributions.extend(recips)
        elif convention == "best_gold":
            contributions.append(max(recips))
        else:
            raise ValueError(f"unknown MRR convention: {convention!r}")
    return float(np.mean(contributions))


def macro_prf(predictions, gold_sets):
    """Macro precision/recall/F1 over per-sample set overlaps.

    Precision averages only samples with nonempty predictions (with the
    argmax fallback in the normal flow this is all of them); recall averages
    over every sample. F1 combines the aggregated P and R.
    """
    precisions, recalls = [], []
    for pred, gold in zip(predictions, gold_sets):
        inter = len(pred & gold)
        if pred:
            precisions.append(inter / len(pred))
        recalls.append(inter / len(gold))
    p = float(np.mean(precisions)) if precisions else 0.0
    r = float(np.mean(recalls)) if recalls else 0.0
    return p, r, _f1(p, r)


def pr_curve(score_rows, gold_sets, tv):
    """Macro P/R/F1 at each of the 50 grid thresholds; scores reused per row."""
    rows = []
    for t in THRESHOLD_GRID:
        preds = [decide(s, t, tv).chosen for s in score_rows]
        p, r, f1 = macro_prf(preds, gold_sets)
        rows.append((float(t), p, r, f1))
    return rows


def consistency_audit(predictions, adjacency, tv):
    """Fraction of samples predicting a type pair with zero training
    co-occurrence."""
    if not predictions:
        return 0.0
    A = adjacency.counts
    flagged = 0
    for pred in predictions:
        ids = sorted(tv.index[t] for t in pred)
        bad = any(
            A[ids[a], ids[b]] == 0
            for a in range(len(ids))
            for b in range(a + 1, len(ids))
        )
        flagged += bad
    return flagged / len(predictions)


def decompose(score_rows, gold_sets, mention_kinds, tv):
    """Best-threshold F1 per mention-kind partition (pronoun vs other).

    Each partition sweeps the full 50-threshold grid independently; an empty
    partition is reported as None, not zero.
    """
    result = {}
    for kind in ("pronoun", "other"):
        idx = [i for i, k in enumerate(mention_kinds) if k == kind]
        if not idx:
            result[kind] = None
            continue
        sub_scores = [score_rows[i] for i in idx]
        sub_gold = [gold_sets[i] for i in idx]
        best = 0.0
        for t in THRESHOLD_GRID:
            preds = [decide(s, t, tv).chosen for s in sub_scores]
            _, _, f1 = macro_prf(preds, sub_gold)
            best = max(best, f1)
        result[kind] = best
    return result["pronoun"], result["other"]


def strict_accuracy(predictions, gold_sets):
    """Fraction of samples whose predicted set matches the gold set exactly."""
    if not predictions:
        return 0.0
    return float(np.mean([p == g for p, g in zip(predictions, gold_sets)]))


def micro_f1(predictions, gold_sets):
    """F1 pooled over all (sample, type) decisions."""
    tp = sum(len(p & g) for p, g in zip(predictions, gold_sets))
    npred = sum(len(p) for p in predictions)
    ngold = sum(len(g) for g in gold_sets)
    p = tp / npred if npred else 0.0
    r = tp / ngold if ngold else 0.0
    return _f1(p, r)


def build_report(score_rows, gold_sets, mention_kinds, tv, threshold=0.5,
                 adjacency=None, mrr_convention="per_pair"):
    """Assemble the full evaluation report at one operating threshold."""
    preds = [decide(s, threshold, tv).chosen for s in score_rows]
    p, r, f1 = macro_prf(preds, gold_sets)
    f1_pron, f1_other = decompose(score_rows, gold_sets, mention_kinds, tv)
    rate = consistency_audit(preds, adjacency, tv) if adjacency is not None else None
    return EvalReport(
        mrr=mrr(score_rows, gold_sets, tv, mrr_convention),
        precision=p,
        recall=r,
        f1=f1,
        threshold=threshold,
        pr_curve=pr_curve(score_rows, gold_sets, tv),
        f1_pronouns=f1_pron,
        f1_other=f1_other,
        consistency_rate=rate,
        strict_accuracy=strict_accuracy(preds, gold_sets),
        micro_f1=micro_f1(preds, gold_sets),
    )
