"""Type co-occurrence graph, word-level type affinities, and the one-hop
propagation over type vectors.

Edges are raw co-occurrence counts (a binarize flag is available). The
propagation is strictly linear and one-hop: no nonlinearity, no stacking.
The word-affinity weight lambda is stored as softplus of an unconstrained
scalar so combined edge weights stay nonnegative.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

VARIANTS = ("symmetric", "row_normalized", "row_normalized_word")

# Dense N x N word-affinity matrices grow fast; refuse past this size
# unless explicitly overridden.
DENSE_AFFINITY_LIMIT = 2000

# softplus(LAMBDA_RAW_INIT) == 1.0
LAMBDA_RAW_INIT = math.log(math.e - 1.0)


@dataclass
class TypeAdjacency:
    """Symmetric co-occurrence counts with self-loops and degree products."""

    counts: np.ndarray  # A, zero diagonal

    def __post_init__(self):
        A = self.counts
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"adjacency must be square, got {A.shape}")
        if not np.allclose(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency diagonal must be zero")

    @property
    def n(self):
        return self.counts.shape[0]

    @property
    def with_self_loops(self):
        return self.counts + np.eye(self.n)

    @property
    def degrees(self):
        return self.with_self_loops.sum(axis=1)

    def fingerprint(self):
        return hashlib.sha256(np.ascontiguousarray(self.counts).tobytes()).hexdigest()


@dataclass
class WordAffinity:
    """Pairwise cosine similarities of type-name embeddings, scaled to (0,1]."""

    scaled: np.ndarray  # (cos + 1) / 2, floored at 1e-12


@dataclass
class PropagationConfig:
    variant: str = "row_normalized_word"
    use_residual: bool = False
    hops: int = field(default=1)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown propagation variant: {self.variant!r}")
        if self.hops != 1:
            raise ValueError("propagation is one-hop only")


def build_cooccurrence(samples, tv, binarize=False):
    """Count unordered gold-type pairs over the training set."""
    if not samples:
        raise ValueError("empty training set")
    N = len(tv)
    A = np.zeros((N, N))
    for s in samples:
        ids = sorted(tv.index[t] for t in s.gold_types)
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                A[ids[a], ids[b]] += 1.0
                A[ids[b], ids[a]] += 1.0
    if binarize:
        A = (A > 0).astype(np.float64)
    return TypeAdjacency(A)


def type_name_embedding(name, wv):
    """Sum of token embeddings; names tokenize on underscores and spaces."""
    tokens = name.replace("_", " ").split()
    vec = np.zeros(wv.dim)
    for t in tokens:
        vec += wv.matrix[wv.id_of(t)]
    return vec


def build_word_affinity(tv, wv, allow_large=False):
    """Cosine-similarity matrix over type-name embeddings, scaled to (0,1].

    Zero-norm name embeddings get cosine 0 against everything (entry 0.5
    after scaling). Antipodal pairs would hit 0 exactly, so entries are
    floored at 1e-12 to honor the open interval.
    """
    N = len(tv)
    if N > DENSE_AFFINITY_LIMIT and not allow_large:
        raise ValueError(
            f"dense word affinity for N={N} exceeds {DENSE_AFFINITY_LIMIT}; "
            "pass allow_large=True to override"
        )
    E = np.stack([type_name_embedding(n, wv) for n in tv.names])
    norms = np.linalg.norm(E, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    cos = (E / safe[:, None]) @ (E / safe[:, None]).T
    cos[norms == 0, :] = 0.0
    cos[:, norms == 0] = 0.0
    scaled = np.maximum((cos + 1.0) / 2.0, 1e-12)
    return WordAffinity(scaled)


def lambda_value(lam_raw):
    """The positive affinity weight from its unconstrained parameter."""
    return ad.activation(lam_raw, "softplus")


def propagate(W_o, T, adj, cfg, word_aff=None, lam_raw=None):
    """One-hop neighbor gathering over type vectors; strictly linear.

    symmetric:            D^-1/2 (A+I) D^-1/2 W_o T
    row_normalized:       D^-1 (A+I) W_o T
    row_normalized_word:  M = (A+I) + softplus(lam) * affinity, degrees
                          recomputed from M each pass, then deg(M)^-1 M W_o T
    With use_residual, W_o is added to the result.
    """
    At = adj.with_self_loops
    WT = ad.matmul(W_o, T)
    if cfg.variant == "symmetric":
        d = adj.degrees
        S = (At / np.sqrt(d)[:, None]) / np.sqrt(d)[None, :]
        out = ad.matmul(Tensor(S), WT)
    elif cfg.variant == "row_normalized":
        S = At / adj.degrees[:, None]
        out = ad.matmul(Tensor(S), WT)
    else:
        if word_aff is None or lam_raw is None:
            raise ValueError("row_normalized_word needs word_aff and lam_raw")
        lam = lambda_value(lam_raw)  # scalar tensor, shape ()
        M = ad.add(Tensor(At), ad.mul(lam, Tensor(word_aff.scaled)))
        deg = ad.sum_axis(M, axis=1, keepdims=True)
        if np.any(deg.data <= 0):
            raise ValueError(
                "combined adjacency has a nonpositive row sum; "
                "reparameterize lambda"
            )
        out = ad.div(ad.matmul(M, WT), deg)
    if cfg.use_residual:
        out = ad.add(out, W_o)
    return out


def propagate_brute_force(W_o, T, adjacency_with_loops):
    """Independent per-row evaluation of the row-normalized one-hop rule.

    Oracle used by tests: row i is the degree-normalized sum over neighbors
    j of A~[i,j] * W_o[j,:] @ T.
    """
    N = adjacency_with_loops.shape[0]
    out = np.zeros_like(W_o)
    for i in range(N):
        acc = np.zeros(W_o.shape[1])
        for j in range(N):
            acc += adjacency_with_loops[i, j] * (W_o[j, :] @ T)
        out[i] = acc / adjacency_with_loops[i].sum()
    return out
