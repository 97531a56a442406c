"""Attention-based mention-context interaction producing the fused feature.

The mention representation is projected into the context space, attends
over the context hidden states through a bilinear form, and is merged with
the retrieved context through a learned gate. The final feature is the gate
output concatenated with the pooled context. A "concat" ablation mode
bypasses the whole interaction and uses [context; mention] directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoders import uniform_init


def init_matching_params(h_m, h_c, rng):
    """W1 (projection), Wa (bilinear), Wr/Wg (fusion affine maps, zero bias)."""
    params = {
        "W1": ad.Tensor(uniform_init(rng, (h_m, h_c)), requires_grad=True, name="W1"),
        "Wa": ad.Tensor(uniform_init(rng, (h_c, h_c)), requires_grad=True, name="Wa"),
        "Wr": ad.Tensor(uniform_init(rng, (3 * h_c, h_c)), requires_grad=True, name="Wr"),
        "Wr_b": ad.Tensor(np.zeros((1, h_c)), requires_grad=True, name="Wr_b"),
        "Wg": ad.Tensor(uniform_init(rng, (3 * h_c, h_c)), requires_grad=True, name="Wg"),
        "Wg_b": ad.Tensor(np.zeros((1, h_c)), requires_grad=True, name="Wg_b"),
    }
    return params, list(params)


@dataclass
class MatchDiagnostics:
    alpha: np.ndarray  # attention distribution over context tokens [B, T]
    gate: np.ndarray  # gate values in (0,1) [B, h_c]
    r: np.ndarray  # fused candidate [B, h_c]
    m_proj: np.ndarray  # projected mention [B, h_c]


def project_mention(M, W1):
    """m_proj = tanh(W1^T M); batched as tanh(M @ W1)."""
    return ad.activation(ad.matmul(M, W1), "tanh")


def attend(m_proj, hidden, Wa, mask):
    """Bilinear attention of the projected mention over context hidden rows.

    Returns (alpha [B, T], r_c [B, h_c]); alpha is a masked softmax over
    valid tokens (exact zeros elsewhere).
    """
    if np.any(np.asarray(mask).sum(axis=1) == 0):
        raise ValueError("attend: all context tokens masked")
    q = ad.matmul(m_proj, Wa)  # [B, h_c]
    scores = [ad.sum_axis(ad.mul(q, h), axis=1, keepdims=True) for h in hidden]
    alpha = ad.masked_softmax_rows(ad.concat(scores), mask)
    r_c = None
    for t, h in enumerate(hidden):
        term = ad.mul(ad.slice_last(alpha, t, t + 1), h)
        r_c = term if r_c is None else ad.add(r_c, term)
    return alpha, r_c


def fuse_gate(r_c, m_proj, params):
    """z = [r_c; m_proj; r_c - m_proj]; o = g*gelu(Wr z) + (1-g)*m_proj."""
    z = ad.concat([r_c, m_proj, ad.sub(r_c, m_proj)])
    r = ad.activation(ad.add(ad.matmul(z, params["Wr"]), params["Wr_b"]), "gelu")
    g = ad.activation(ad.add(ad.matmul(z, params["Wg"]), params["Wg_b"]), "sigmoid")
    o = ad.add(ad.mul(g, r), ad.mul(ad.sub(1.0, g), m_proj))
    return o, r, g


def assemble_feature(o, C, cfg, mode="eval", rng=None):
    """f = [o; C] with dropout at cfg.dropout_fused in train mode."""
    return ad.dropout(ad.concat([o, C]), cfg.dropout_fused, mode, rng)


def match(M, ctx, params, cfg, mode="eval", rng=None, keep_diagnostics=False):
    """Full interaction path; returns (f, diagnostics or None)."""
    m_proj = project_mention(M, params["W1"])
    alpha, r_c = attend(m_proj, ctx.hidden, params["Wa"], ctx.mask)
    o, r, g = fuse_gate(r_c, m_proj, params)
    f = assemble_feature(o, ctx.pooled, cfg, mode, rng)
    diag = None
    if keep_diagnostics:
        diag = MatchDiagnostics(
            alpha.data.copy(), g.data.copy(), r.data.copy(), m_proj.data.copy()
        )
    return f, diag


def concat_ablation_feature(C, M, cfg, mode="eval", rng=None):
    """The no-interaction variant: f = [C; M] straight into the linear head."""
    return ad.dropout(ad.concat([C, M]), cfg.dropout_fused, mode, rng)
