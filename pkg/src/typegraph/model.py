"""Full typing model: configuration, parameter store, and the forward path
from a batch to per-type scores."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import classifier, encoders, labelgraph, matching
from .autodiff import Tensor
from .data import EncodeLimits, build_batches
from .encoders import uniform_init
from .labelgraph import LAMBDA_RAW_INIT, PropagationConfig


@dataclass
class ModelConfig:
    pos_dim: int = 50
    hidden: int = 100  # per LSTM direction; context feature is 2*hidden
    char_dim: int = 30
    char_filters: int = 100
    char_width: int = 5
    dropout_context: float = 0.2
    dropout_mention: float = 0.5
    dropout_fused: float = 0.2
    variant: str = "row_normalized_word"
    use_residual: bool = False
    propagation_enabled: bool = True
    interaction_enabled: bool = True
    tune_word_embeddings: bool = False
    max_context: int = 25
    max_mention_tokens: int = 10
    max_mention_chars: int = 25

    def limits(self):
        return EncodeLimits(self.max_context, self.max_mention_tokens, self.max_mention_chars)

    @property
    def h_c(self):
        return 2 * self.hidden

    def h_m(self, word_dim):
        return self.char_filters + word_dim

    def feature_dim(self, word_dim):
        if self.interaction_enabled:
            return 2 * self.h_c
        return self.h_c + self.h_m(word_dim)


class Model:
    """Owns the parameter tensors, the label graph, and the forward pass."""

    def __init__(self, cfg, wv, tv, adjacency, seed=0):
        self.cfg = cfg
        self.wv = wv
        self.tv = tv
        self.adjacency = adjacency
        self.prop_cfg = PropagationConfig(cfg.variant, cfg.use_residual)
        self.word_affinity = (
            labelgraph.build_word_affinity(tv, wv)
            if cfg.variant == "row_normalized_word"
            else None
        )
        rng = np.random.default_rng(seed)
        self.params, self.trainable = encoders.init_encoder_params(wv.matrix, cfg, rng)
        mparams, mtrain = matching.init_matching_params(
            cfg.h_m(wv.dim), cfg.h_c, rng
        )
        self.params.update(mparams)
        self.trainable += mtrain

        d_f = cfg.feature_dim(wv.dim)
        self.params["W_o"] = Tensor(
            uniform_init(rng, (len(tv), d_f)), requires_grad=True, name="W_o"
        )
        self.params["T"] = Tensor(
            uniform_init(rng, (d_f, d_f)), requires_grad=True, name="T"
        )
        self.trainable += ["W_o", "T"]
        if cfg.variant == "row_normalized_word":
            self.params["lam_raw"] = Tensor(
                np.float64(LAMBDA_RAW_INIT), requires_grad=True, name="lam_raw"
            )
            self.trainable.append("lam_raw")

    def trainable_params(self):
        return {name: self.params[name] for name in self.trainable}

    def zero_grads(self):
        for name in self.trainable:
            self.params[name].zero_grad()

    def feature(self, batch, mode="eval", rng=None, keep_diagnostics=False):
        """Fused feature f for a batch; diagnostics only when requested."""
        ctx = encoders.encode_context(batch, self.params, self.cfg, mode, rng)
        M = encoders.encode_mention(batch, self.params, self.cfg, mode, rng)
        if self.cfg.interaction_enabled:
            return matching.match(
                M, ctx, self.params, self.cfg, mode, rng, keep_diagnostics
            )
        f = matching.concat_ablation_feature(ctx.pooled, M, self.cfg, mode, rng)
        return f, None

    def logits(self, batch, mode="eval", rng=None):
        f, _ = self.feature(batch, mode, rng)
        return classifier.logits(
            f,
            self.params["W_o"],
            self.params["T"],
            self.adjacency,
            self.prop_cfg,
            self.word_affinity,
            self.params.get("lam_raw"),
            self.cfg.propagation_enabled,
        )

    def loss(self, batch, mode="train", rng=None):
        probs = classifier.probabilities(self.logits(batch, mode, rng))
        return classifier.multitask_loss(probs, batch.gold, self.tv)

    def score_samples(self, samples, batch_size=64):
        """Eval-mode per-type probabilities for a sample list, in order."""
        rng = np.random.default_rng(0)
        rows = np.zeros((len(samples), len(self.tv)))
        for start in range(0, len(samples), batch_size):
            chunk = samples[start:start + batch_size]
            batches = build_batches(
                chunk, len(chunk), _IdentityOrder(len(chunk)), self.wv, self.tv,
                self.cfg.limits(),
            )
            z = self.logits(batches[0], mode="eval", rng=rng)
            rows[start:start + len(chunk)] = ad.sigmoid_values(z.data)
        return rows

    def state_dict(self):
        return {name: self.params[name].data.copy() for name in self.params}

    def load_state(self, state):
        for name, value in state.items():
            if name not in self.params:
                raise ValueError(f"unknown parameter {name!r} in checkpoint")
            if tuple(self.params[name].data.shape) != tuple(np.shape(value)):
                raise ValueError(
                    f"shape mismatch for {name!r}: expected "
                    f"{self.params[name].data.shape}, found {np.shape(value)}"
                )
            self.params[name].data[...] = value


class _IdentityOrder:
    """Stand-in rng whose permutation is the identity (keeps sample order)."""

    def __init__(self, n):
        self.n = n

    def permutation(self, n):
        return np.arange(n)
