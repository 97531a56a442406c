"""Context and mention encoders.

The context encoder runs word+position embeddings through a bidirectional
LSTM and a self-attentive pooling layer; the mention encoder concatenates a
char-level CNN feature with a self-attentive pool over mention word
embeddings. All state updates are masked so padded positions contribute
exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import CHAR_VOCAB_SIZE, PAD_ID


def uniform_init(rng, shape, scale=0.1):
    return rng.uniform(-scale, scale, size=shape)


def init_encoder_params(word_matrix, cfg, rng):
    """Create all encoder parameter tensors.

    Returns (params dict, trainable name list). Word embeddings are frozen
    unless cfg.tune_word_embeddings; the forget-gate slice of each LSTM bias
    starts at 1.
    """
    dw = word_matrix.shape[1]
    d_in = dw + cfg.pos_dim
    H = cfg.hidden
    h_c = 2 * H

    params = {}
    trainable = []

    params["word_emb"] = Tensor(word_matrix.copy(), requires_grad=cfg.tune_word_embeddings)
    if cfg.tune_word_embeddings:
        trainable.append("word_emb")

    def p(name, value):
        params[name] = Tensor(value, requires_grad=True, name=name)
        trainable.append(name)

    p("pos_emb", uniform_init(rng, (3, cfg.pos_dim)))
    for d in ("fwd", "bwd"):
        p(f"lstm_{d}_Wx", uniform_init(rng, (d_in, 4 * H)))
        p(f"lstm_{d}_Wh", uniform_init(rng, (H, 4 * H)))
        b = np.zeros((1, 4 * H))
        b[0, H:2 * H] = 1.0  # forget gate bias
        p(f"lstm_{d}_b", b)
    p("ctx_pool_W", uniform_init(rng, (h_c, h_c)))
    p("ctx_pool_v", uniform_init(rng, (h_c, 1)))
    p("men_pool_W", uniform_init(rng, (dw, dw)))
    p("men_pool_v", uniform_init(rng, (dw, 1)))
    p("char_emb", uniform_init(rng, (CHAR_VOCAB_SIZE, cfg.char_dim)))
    p("char_conv_W", uniform_init(rng, (cfg.char_width * cfg.char_dim, cfg.char_filters)))
    p("char_conv_b", np.zeros((1, cfg.char_filters)))
    return params, trainable


@dataclass
class ContextEncoding:
    hidden: list  # per-timestep [B, h_c] tensors, exact zeros at padded slots
    pooled: "Tensor"  # [B, h_c]
    mask: np.ndarray  # [B, T]


def self_attentive_pool(hidden, mask, W, v):
    """score_t = v . tanh(W h_t); masked softmax over t; pooled = sum a_t h_t."""
    if np.any(np.asarray(mask).sum(axis=1) == 0):
        raise ValueError("self_attentive_pool: all positions masked")
    scores = [ad.matmul(ad.activation(ad.matmul(h, W), "tanh"), v) for h in hidden]
    alpha = ad.masked_softmax_rows(ad.concat(scores), mask)  # [B, T]
    pooled = None
    for t, h in enumerate(hidden):
        term = ad.mul(ad.slice_last(alpha, t, t + 1), h)
        pooled = term if pooled is None else ad.add(pooled, term)
    return pooled, alpha


def _lstm_direction(xs, mask, Wx, Wh, b, reverse):
    """One-direction LSTM with masked state updates.

    Masked steps pass the previous state through untouched, so pads after
    (forward) or before (backward) the true span never leak into valid rows.
    Emitted hidden rows at masked steps are exact zeros.
    """
    B = xs[0].shape[0]
    H = Wh.shape[0]
    h = Tensor(np.zeros((B, H)))
    c = Tensor(np.zeros((B, H)))
    out = [None] * len(xs)
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    for t in order:
        gates = ad.add(ad.add(ad.matmul(xs[t], Wx), ad.matmul(h, Wh)), b)
        i = ad.activation(ad.slice_last(gates, 0, H), "sigmoid")
        f = ad.activation(ad.slice_last(gates, H, 2 * H), "sigmoid")
        g = ad.activation(ad.slice_last(gates, 2 * H, 3 * H), "tanh")
        o = ad.activation(ad.slice_last(gates, 3 * H, 4 * H), "sigmoid")
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.activation(c_new, "tanh"))
        m = mask[:, t:t + 1]
        out[t] = ad.mul(h_new, m)
        h = ad.add(out[t], ad.mul(h, 1.0 - m))
        c = ad.add(ad.mul(c_new, m), ad.mul(c, 1.0 - m))
    return out


def encode_context(batch, params, cfg, mode="eval", rng=None):
    """Bi-LSTM over word+position inputs, then self-attentive pooling.

    Dropout (cfg.dropout_context) hits the pooled representation in train mode.
    """
    T = batch.ctx_ids.shape[1]
    xs = []
    for t in range(T):
        w = ad.gather_rows(params["word_emb"], batch.ctx_ids[:, t])
        p = ad.gather_rows(params["pos_emb"], batch.ctx_pos[:, t])
        xs.append(ad.concat([w, p]))
    fwd = _lstm_direction(
        xs, batch.ctx_mask, params["lstm_fwd_Wx"], params["lstm_fwd_Wh"],
        params["lstm_fwd_b"], reverse=False,
    )
    bwd = _lstm_direction(
        xs, batch.ctx_mask, params["lstm_bwd_Wx"], params["lstm_bwd_Wh"],
        params["lstm_bwd_b"], reverse=True,
    )
    hidden = [ad.concat([f, b]) for f, b in zip(fwd, bwd)]
    pooled, _ = self_attentive_pool(
        hidden, batch.ctx_mask, params["ctx_pool_W"], params["ctx_pool_v"]
    )
    pooled = ad.dropout(pooled, cfg.dropout_context, mode, rng)
    return ContextEncoding(hidden, pooled, batch.ctx_mask)


def encode_mention(batch, params, cfg, mode="eval", rng=None):
    """Char-CNN feature concatenated with pooled mention word embeddings."""
    # Word branch: self-attentive pool over raw mention embeddings.
    Tm = batch.mention_ids.shape[1]
    word_rows = [
        ad.gather_rows(params["word_emb"], batch.mention_ids[:, t]) for t in range(Tm)
    ]
    word_feat, _ = self_attentive_pool(
        word_rows, batch.mention_mask, params["men_pool_W"], params["men_pool_v"]
    )

    # Char branch: embeddings are zeroed at pad slots before convolution so
    # windows running past the mention see exact zeros.
    B, L = batch.char_ids.shape
    width = cfg.char_width
    char_valid = (np.arange(L)[None, :] < batch.char_len[:, None]).astype(np.float64)
    emb = ad.gather_rows(params["char_emb"], batch.char_ids.reshape(-1))
    emb = ad.mul(
        ad.reshape(emb, (B, L, cfg.char_dim)), char_valid[:, :, None]
    )
    # Extend with width-1 zero positions so every start slot has a full window.
    pad_tail = Tensor(np.zeros((B, width - 1, cfg.char_dim))) if width > 1 else None
    seq = ad.concat([ad.reshape(emb, (B, L * cfg.char_dim)),
                     ad.reshape(pad_tail, (B, (width - 1) * cfg.char_dim))]) \
        if pad_tail is not None else ad.reshape(emb, (B, L * cfg.char_dim))

    conv_out = []
    for pos in range(L):
        window = ad.slice_last(seq, pos * cfg.char_dim, (pos + width) * cfg.char_dim)
        conv_out.append(ad.add(ad.matmul(window, params["char_conv_W"]), params["char_conv_b"]))
    pos_valid = np.arange(L)[None, :] < np.maximum(batch.char_len, 1)[:, None]
    char_feat = ad.activation(ad.masked_max(conv_out, pos_valid), "relu")

    mention = ad.concat([char_feat, word_feat])
    return ad.dropout(mention, cfg.dropout_mention, mode, rng)
