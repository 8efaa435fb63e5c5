"""Causal self-attention next-item model with tied input/output item embeddings."""

from __future__ import annotations

import math

import numpy as np

from seqstruct.diffcore import Tensor, ops
from seqstruct.models.base import SequentialModel, mask_states, pad_mask


class AttentionModel(SequentialModel):
    """Pre-norm transformer blocks over item + learned position embeddings.

    Positions are right-aligned: the most recent item always sits at
    position ``max_len - 1``, whatever the padded batch width.
    """

    def _init_params(self, rng) -> None:
        hp = self.hparams
        d = hp.hidden
        p = self.params
        emb = self._uniform(rng, (self.catalog_size, d))
        emb.data[0] = 0
        p["item_emb"] = emb
        p["pos_emb"] = self._uniform(rng, (hp.max_len, d))
        for b in range(hp.blocks):
            for name in ("q", "k", "v", "o", "ff1", "ff2"):
                p[f"block{b}.{name}.w"] = self._uniform(rng, (d, d))
                p[f"block{b}.{name}.b"] = self._zeros((d,))
            for ln in ("ln1", "ln2"):
                p[f"block{b}.{ln}.g"] = self._ones((d,))
                p[f"block{b}.{ln}.b"] = self._zeros((d,))
        p["final_ln.g"] = self._ones((d,))
        p["final_ln.b"] = self._zeros((d,))

    @staticmethod
    def parameter_count(catalog_size: int, hidden: int, max_len: int, blocks: int) -> int:
        d = hidden
        per_block = 6 * (d * d + d) + 2 * (2 * d)
        return catalog_size * d + max_len * d + blocks * per_block + 2 * d

    def _block(self, b: int, x: Tensor, mask: np.ndarray, training: bool, rng) -> Tensor:
        p = self.params
        hp = self.hparams

        def lin(name, h):
            return ops.linear(h, p[f"block{b}.{name}.w"], p[f"block{b}.{name}.b"])

        h = ops.layer_norm(x, p[f"block{b}.ln1.g"], p[f"block{b}.ln1.b"])
        a = ops.attention(lin("q", h), lin("k", h), lin("v", h), hp.heads, causal=True, key_mask=mask)
        x = ops.add(x, ops.dropout(lin("o", a), hp.dropout, rng, training))
        h = ops.layer_norm(x, p[f"block{b}.ln2.g"], p[f"block{b}.ln2.b"])
        f = lin("ff2", ops.gelu(lin("ff1", h)))
        x = ops.add(x, ops.dropout(f, hp.dropout, rng, training))
        return mask_states(x, mask)

    def hidden(self, seq: np.ndarray, training: bool = False, rng=None) -> Tensor:
        hp = self.hparams
        p = self.params
        width = seq.shape[1]
        if width > hp.max_len:
            raise ValueError(f"input width {width} exceeds max_len {hp.max_len}")
        mask = pad_mask(seq)
        positions = np.arange(hp.max_len - width, hp.max_len)
        x = ops.scale(ops.embedding(p["item_emb"], seq), math.sqrt(hp.hidden))
        x = ops.add(x, ops.embedding(p["pos_emb"], positions))
        x = mask_states(ops.dropout(x, hp.dropout, rng, training), mask)
        for b in range(hp.blocks):
            x = self._block(b, x, mask, training, rng)
        return ops.layer_norm(x, p["final_ln.g"], p["final_ln.b"])

    def logits(self, states: Tensor) -> Tensor:
        return ops.matmul(states, ops.transpose(self.params["item_emb"]))
