"""Gated-recurrent next-item model with a separate output projection."""

from __future__ import annotations

import numpy as np

from seqstruct.diffcore import Tensor, ops
from seqstruct.models.base import SequentialModel, pad_mask


class RecurrentModel(SequentialModel):
    def _init_params(self, rng) -> None:
        hp = self.hparams
        h = hp.hidden
        p = self.params
        emb = self._uniform(rng, (self.catalog_size, h))
        emb.data[0] = 0
        p["item_emb"] = emb
        for layer in range(hp.rnn_layers):
            p[f"gru{layer}.w_ih"] = self._uniform(rng, (h, 3 * h))
            p[f"gru{layer}.w_hh"] = self._uniform(rng, (h, 3 * h))
            p[f"gru{layer}.b_ih"] = self._uniform(rng, (3 * h,))
            p[f"gru{layer}.b_hh"] = self._uniform(rng, (3 * h,))
        p["out.w"] = self._uniform(rng, (h, self.catalog_size))
        p["out.b"] = self._zeros((self.catalog_size,))

    @staticmethod
    def parameter_count(catalog_size: int, hidden: int, rnn_layers: int) -> int:
        h = hidden
        per_layer = 2 * (h * 3 * h) + 2 * (3 * h)
        return catalog_size * h + rnn_layers * per_layer + h * catalog_size + catalog_size

    def hidden(self, seq: np.ndarray, training: bool = False, rng=None) -> Tensor:
        hp = self.hparams
        p = self.params
        mask = pad_mask(seq)
        x = ops.dropout(ops.embedding(p["item_emb"], seq), hp.dropout, rng, training)
        for layer in range(hp.rnn_layers):
            x = ops.gru(
                x,
                p[f"gru{layer}.w_ih"],
                p[f"gru{layer}.w_hh"],
                p[f"gru{layer}.b_ih"],
                p[f"gru{layer}.b_hh"],
                mask=mask,
            )
            x = ops.dropout(x, hp.dropout, rng, training)
        return x

    def logits(self, states: Tensor) -> Tensor:
        return ops.linear(states, self.params["out.w"], self.params["out.b"])
