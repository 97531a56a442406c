"""Deterministic synthetic typing corpora with planted label structure.

Types are organized into clusters sharing a theme word. Each sample is
generated from one cluster: its context carries a theme signal token plus
noise, the gold set always contains the cluster's general type, one of its
fine types (signaled by a dedicated context token), and correlated ultra
types that have no direct lexical evidence of their own. Cross-cluster type
pairs never co-occur, so the planted co-occurrence graph is block diagonal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import PRONOUNS, Sample, TypeVocabulary, WordVocabulary

THEMES = ("arbor", "brine", "cinder", "dune", "ember", "frost")


@dataclass
class SyntheticTask:
    samples: list
    type_vocab: TypeVocabulary
    word_vocab: WordVocabulary
    clusters: list  # per cluster: dict with general/fine/ultra type names


def _build_types(n_clusters, tail_every_cluster=False):
    names, grans, clusters = [], [], []
    generals = [f"class{g}" for g in range(3)]
    for g in generals:
        names.append(g)
        grans.append("general")
    if tail_every_cluster:
        ultra_counts = [3] * n_clusters
    else:
        ultra_counts = [3, 3, 3, 2, 2, 2][:n_clusters]
    for c in range(n_clusters):
        theme = THEMES[c]
        fines = [f"{theme}_kind{j}" for j in range(2)]
        # Hierarchical ultra names: the first two embed their parent fine
        # type's kind token; the third (tail) ultra is keyed to the theme
        # alone, matching its parity-independent attachment.
        ultras = [
            f"{theme}_trait2" if k == 2 else f"{theme}_kind{k}_trait{k}"
            for k in range(ultra_counts[c])
        ]
        for f in fines:
            names.append(f)
            grans.append("fine")
        for u in ultras:
            names.append(u)
            grans.append("ultra")
        clusters.append({"general": generals[c % 3], "fine": fines, "ultra": ultras})
    return TypeVocabulary(names, grans), clusters


def _build_words(tv, rng, dim):
    """Embeddings with structured type-name tokens.

    Theme tokens sit on a centered simplex (pairwise cosine -1/5), the two
    kind tokens are antipodal, and trait tokens are small perturbations, so
    summed name vectors of related types have high cosine while unrelated
    ones sit at or below the neutral point. All other tokens are random.
    """
    tokens = set()
    for name in tv.names:
        tokens.update(name.replace("_", " ").split())
    for theme in THEMES:
        tokens.add(f"sig_{theme}")
        for j in range(2):
            tokens.add(f"cue_{theme}{j}")
    tokens.update(f"noise{i}" for i in range(30))
    tokens.update(p for p in sorted(PRONOUNS))
    tokens.update(["the", "a", "was", "seen", "near"])
    ordered = sorted(tokens)
    matrix = np.vstack(
        [np.zeros(dim), np.zeros(dim), rng.normal(0, 0.5, size=(len(ordered), dim))]
    )
    if dim >= 8:
        simplex = np.eye(6) - 1.0 / 6.0
        simplex /= np.linalg.norm(simplex, axis=1, keepdims=True)
        index = {tok: i + 2 for i, tok in enumerate(ordered)}
        for c, theme in enumerate(THEMES):
            if theme in index:
                matrix[index[theme]] = 0.0
                matrix[index[theme], :6] = simplex[c]
        parity = np.zeros(dim)
        parity[6] = 0.6
        for j, sign in ((0, 1.0), (1, -1.0)):
            tok = f"kind{j}"
            if tok in index:
                matrix[index[tok]] = sign * parity
        for tok, i in index.items():
            if tok.startswith("trait"):
                matrix[i] = rng.normal(0, 0.05, size=dim)
    matrix[0] = matrix[2:].mean(axis=0)
    return WordVocabulary(["<unk>", "<pad>"] + ordered, matrix)


def make_task(n_samples, seed=0, n_clusters=6, word_dim=12, pronoun_rate=0.3,
              ultra_rate=0.85, noise_tokens=3, tail_every_cluster=False,
              annotation="joint", ultra_annotation_rate=0.15):
    """Build a corpus of n_samples with planted co-occurrence structure.

    annotation controls how gold sets are emitted:
    - "joint": complete gold sets across all granularities (default);
    - "partial": granularity-partial annotation. Most samples carry only
      their coarse labels (general + fine); a fraction instead carries a
      single ultra label attached to an uninformative mention (a pronoun in
      pure noise), as produced by knowledge-base-style distant supervision.
      Ultra types therefore never co-occur with anything, their contexts
      teach nothing, and the multi-task loss keeps the ultra group inactive
      on coarse samples.
    """
    if annotation not in ("joint", "partial"):
        raise ValueError(f"unknown annotation mode: {annotation!r}")
    rng = np.random.default_rng(seed)
    tv, clusters = _build_types(n_clusters, tail_every_cluster)
    wv = _build_words(tv, rng, word_dim)

    samples = []
    for _ in range(n_samples):
        c = int(rng.integers(n_clusters))
        cluster = clusters[c]
        theme = THEMES[c]
        j = int(rng.integers(2))

        gold = {cluster["general"], cluster["fine"][j]}
        # Ultras tied to the chosen fine type, with no dedicated cue token;
        # the tail ultra attaches to the theme regardless of parity.
        ultras = set()
        for k, u in enumerate(cluster["ultra"]):
            if k == 2 or k % 2 == j:
                if rng.random() < ultra_rate:
                    ultras.add(u)
        if annotation == "joint":
            gold |= ultras
        elif rng.random() < ultra_annotation_rate and ultras:
            noise = [f"noise{int(rng.integers(30))}" for _ in range(noise_tokens)]
            samples.append(Sample(
                ["the"] + noise[:2],
                [str(rng.choice(sorted(PRONOUNS)))],
                ["was", "seen"] + noise[2:],
                {str(rng.choice(sorted(ultras)))},
            ))
            continue

        noise = [f"noise{int(rng.integers(30))}" for _ in range(noise_tokens)]
        left = ["the"] + noise[:2] + [f"sig_{theme}"]
        right = [f"cue_{theme}{j}", "was", "seen"] + noise[2:]
        if rng.random() < pronoun_rate:
            mention = [str(rng.choice(sorted(PRONOUNS)))]
        else:
            mention = [theme, f"kind{j}"]
        samples.append(Sample(left, mention, right, gold))
    for s in samples:
        s.mention_kind = (
            "pronoun" if len(s.mention) == 1 and s.mention[0] in PRONOUNS else "other"
        )
    return SyntheticTask(samples, tv, wv, clusters)


def write_dataset(samples, path):
    """Emit samples in the JSON-lines ingestion format."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps({
                "left_context_token": s.left_context,
                "mention_span": " ".join(s.mention),
                "right_context_token": s.right_context,
                "y_str": sorted(s.gold_types),
            }) + "\n")


def write_type_vocab(tv, path):
    with open(path, "w", encoding="utf-8") as fh:
        for name, gran in zip(tv.names, tv.granularity):
            fh.write(f"{name}\t{gran}\n")


def write_embeddings(wv, path):
    """Emit the non-reserved rows in the text embedding format."""
    with open(path, "w", encoding="utf-8") as fh:
        for token, row in zip(wv.tokens[2:], wv.matrix[2:]):
            fh.write(token + " " + " ".join(repr(float(x)) for x in row) + "\n")
