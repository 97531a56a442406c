"""Dataset, embedding, and type-vocabulary ingestion plus batch assembly.

File formats follow the public Ultra-Fine release layout: JSON lines with
left_context_token / mention_span / right_context_token / y_str, embeddings
as whitespace-separated text (token first), and the type vocabulary as a
two-column TSV (name<TAB>granularity).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

UNK_ID = 0
PAD_ID = 1

POS_BEFORE = 0
POS_INSIDE = 1
POS_AFTER = 2

GRANULARITIES = ("general", "fine", "ultra")

# Lowercased exact match on single-token mentions.
PRONOUNS = frozenset(
    "he she it they him her them his hers its their theirs i you we me us "
    "myself himself herself itself themselves".split()
)

# Char ids: 0 = UNK, 1 = PAD, then printable ASCII 32..126.
CHAR_VOCAB_SIZE = 2 + (126 - 32 + 1)


def char_id(ch):
    o = ord(ch)
    return o - 32 + 2 if 32 <= o <= 126 else UNK_ID


class DataError(ValueError):
    """Raised for malformed input files."""


@dataclass
class Sample:
    """One typing instance: mention span in context plus its gold type set."""

    left_context: list
    mention: list
    right_context: list
    gold_types: set
    mention_kind: str = "other"

    def __post_init__(self):
        if not self.mention:
            raise DataError("mention must be nonempty")


@dataclass
class TypeVocabulary:
    names: list
    granularity: list
    index: dict = field(init=False)

    def __post_init__(self):
        self.index = {n: i for i, n in enumerate(self.names)}
        if len(self.index) != len(self.names):
            raise DataError("type names must be unique")

    def __len__(self):
        return len(self.names)

    def group_indices(self, group):
        return np.array(
            [i for i, g in enumerate(self.granularity) if g == group], dtype=np.intp
        )

    def multi_hot(self, types):
        v = np.zeros(len(self.names), dtype=np.float64)
        for t in types:
            v[self.index[t]] = 1.0
        return v


@dataclass
class WordVocabulary:
    """Token ids aligned with embedding matrix rows; UNK=0, PAD=1."""

    tokens: list
    matrix: np.ndarray
    index: dict = field(init=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if self.matrix.shape[0] != len(self.tokens):
            raise DataError("embedding row count must equal vocabulary size")

    @property
    def dim(self):
        return self.matrix.shape[1]

    def id_of(self, token):
        return self.index.get(token, UNK_ID)


@dataclass
class EncodeLimits:
    max_context: int = 25  # tokens kept per context side, nearest the mention
    max_mention_tokens: int = 10
    max_mention_chars: int = 25


@dataclass
class EncodedSample:
    ctx_ids: np.ndarray
    ctx_pos: np.ndarray
    mention_ids: np.ndarray
    char_ids: np.ndarray
    gold: np.ndarray
    mention_kind: str


@dataclass
class Batch:
    """Padded id matrices with explicit length masks.

    Padding never reaches attention, pooling, or the loss: every consumer
    multiplies by these masks.
    """

    ctx_ids: np.ndarray  # [B, T] int
    ctx_pos: np.ndarray  # [B, T] int, pad slots hold 0 and are masked out
    ctx_mask: np.ndarray  # [B, T] {0,1}
    mention_ids: np.ndarray  # [B, Tm] int
    mention_mask: np.ndarray  # [B, Tm] {0,1}
    char_ids: np.ndarray  # [B, L] int
    char_len: np.ndarray  # [B] int
    gold: np.ndarray  # [B, N] {0,1}
    mention_kinds: list

    @property
    def size(self):
        return self.ctx_ids.shape[0]


def classify_mention(mention_tokens):
    if len(mention_tokens) == 1 and mention_tokens[0].lower() in PRONOUNS:
        return "pronoun"
    return "other"


def load_dataset(path, vocab):
    """Read JSON-lines samples; drop (and count) those with unknown gold types.

    Returns (samples, report) where report counts dropped lines.
    """
    samples = []
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                left = list(rec["left_context_token"])
                mention = str(rec["mention_span"]).split()
                right = list(rec["right_context_token"])
                gold = set(rec["y_str"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}: malformed line {lineno}: {exc}") from exc
            if not gold or not mention:
                raise DataError(f"{path}: line {lineno}: empty mention or gold set")
            if any(t not in vocab.index for t in gold):
                dropped += 1
                continue
            samples.append(
                Sample(left, mention, right, gold, classify_mention(mention))
            )
    if not samples:
        raise DataError(f"{path}: no usable samples")
    return samples, {"dropped_unknown_type": dropped, "loaded": len(samples)}


def load_embeddings(path, dim):
    """Load text-format embeddings; UNK row = mean of loaded vectors, PAD = 0."""
    tokens = ["<unk>", "<pad>"]
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise DataError(
                    f"{path}: line {lineno}: expected {dim} values, got {len(parts) - 1}"
                )
            tokens.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if not rows:
        raise DataError(f"{path}: empty embedding file")
    loaded = np.array(rows, dtype=np.float64)
    matrix = np.vstack([loaded.mean(axis=0), np.zeros(dim), loaded])
    return WordVocabulary(tokens, matrix)


def load_type_vocab(path):
    names, grans = [], []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}: line {lineno}: expected name<TAB>granularity")
            name, gran = parts
            if gran not in GRANULARITIES:
                raise DataError(f"{path}: line {lineno}: unknown granularity {gran!r}")
            if name in seen:
                raise DataError(f"{path}: line {lineno}: duplicate type {name!r}")
            seen.add(name)
            names.append(name)
            grans.append(gran)
    if not names:
        raise DataError(f"{path}: empty type vocabulary")
    return TypeVocabulary(names, grans)


def encode_sample(s, wv, tv, limits=None):
    """Map a sample to padded-free id arrays; truncation keeps tokens nearest
    the mention (left context drops from the far left, right from the far right)."""
    limits = limits or EncodeLimits()
    left = s.left_context[-limits.max_context:]
    right = s.right_context[: limits.max_context]
    mention = s.mention[: limits.max_mention_tokens]

    ctx_tokens = left + mention + right
    ctx_ids = np.array([wv.id_of(t) for t in ctx_tokens], dtype=np.intp)
    ctx_pos = np.array(
        [POS_BEFORE] * len(left) + [POS_INSIDE] * len(mention) + [POS_AFTER] * len(right),
        dtype=np.intp,
    )
    mention_ids = np.array([wv.id_of(t) for t in mention], dtype=np.intp)
    chars = " ".join(s.mention)[: limits.max_mention_chars]
    char_ids = np.array([char_id(c) for c in chars], dtype=np.intp)
    return EncodedSample(
        ctx_ids, ctx_pos, mention_ids, char_ids, tv.multi_hot(s.gold_types), s.mention_kind
    )


def decode_sample(enc, wv, tv):
    """Recover (context tokens, mention tokens, gold types) from an encoding."""
    ctx = [wv.tokens[i] for i in enc.ctx_ids]
    mention = [wv.tokens[i] for i in enc.mention_ids]
    gold = {tv.names[i] for i in np.nonzero(enc.gold)[0]}
    return ctx, mention, gold


def collate(encoded, char_limit=25):
    """Pad a list of EncodedSample into one Batch."""
    B = len(encoded)
    T = max(e.ctx_ids.size for e in encoded)
    Tm = max(e.mention_ids.size for e in encoded)
    N = encoded[0].gold.size

    ctx_ids = np.full((B, T), PAD_ID, dtype=np.intp)
    ctx_pos = np.zeros((B, T), dtype=np.intp)
    ctx_mask = np.zeros((B, T))
    mention_ids = np.full((B, Tm), PAD_ID, dtype=np.intp)
    mention_mask = np.zeros((B, Tm))
    char_ids = np.full((B, char_limit), PAD_ID, dtype=np.intp)
    char_len = np.zeros(B, dtype=np.intp)
    gold = np.zeros((B, N))
    kinds = []

    for b, e in enumerate(encoded):
        n = e.ctx_ids.size
        ctx_ids[b, :n] = e.ctx_ids
        ctx_pos[b, :n] = e.ctx_pos
        ctx_mask[b, :n] = 1.0
        m = e.mention_ids.size
        mention_ids[b, :m] = e.mention_ids
        mention_mask[b, :m] = 1.0
        c = min(e.char_ids.size, char_limit)
        char_ids[b, :c] = e.char_ids[:c]
        char_len[b] = c
        gold[b] = e.gold
        kinds.append(e.mention_kind)

    return Batch(
        ctx_ids, ctx_pos, ctx_mask, mention_ids, mention_mask, char_ids, char_len, gold, kinds
    )


def build_batches(samples, size, rng, wv, tv, limits=None):
    """Seeded shuffle, contiguous grouping, final short batch kept."""
    if size < 1:
        raise ValueError("batch size must be >= 1")
    if not samples:
        raise ValueError("empty sample list")
    limits = limits or EncodeLimits()
    order = rng.permutation(len(samples))
    batches = []
    for start in range(0, len(samples), size):
        group = [encode_sample(samples[i], wv, tv, limits) for i in order[start:start + size]]
        batches.append(collate(group, limits.max_mention_chars))
    return batches
