"""Next-item training loop with validation early stopping."""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from seqstruct.diffcore import Adam, NonFiniteError, ops
from seqstruct.models.base import PAD, ModelHParams, SequentialModel, left_pad

log = logging.getLogger(__name__)


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, batch: int, cause: Exception | None = None):
        super().__init__(f"non-finite values at epoch {epoch}, batch {batch}: {cause}")
        self.epoch = epoch
        self.batch = batch


def training_windows(sequences, max_len: int) -> list[np.ndarray]:
    """Model-id windows of the last ``max_len + 1`` items; shorter than 2 dropped."""
    out = []
    for seq in sequences:
        if len(seq) < 2:
            continue
        out.append(np.asarray(seq[-(max_len + 1):], dtype=np.int64) + 1)
    return out


def make_batch(windows: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Left-padded inputs and shift-by-one targets: ``y[:, p] == x[:, p + 1]``."""
    x = left_pad([w[:-1] for w in windows])
    y = left_pad([w[1:] for w in windows], width=x.shape[1])
    return x, y


def iterate_batches(windows: list[np.ndarray], batch: int, rng: np.random.Generator):
    order = rng.permutation(len(windows))
    for start in range(0, len(order), batch):
        yield make_batch([windows[j] for j in order[start:start + batch]])


def batch_loss(model: SequentialModel, x: np.ndarray, y: np.ndarray, rng, training: bool = True):
    states = model.hidden(x, training=training, rng=rng)
    flat_y = y.reshape(-1)
    rows = np.nonzero(flat_y != PAD)[0]
    picked = ops.getitem(ops.reshape(states, (-1, states.shape[-1])), rows)
    return ops.cross_entropy_logits(model.logits(picked), flat_y[rows])


def train(model: SequentialModel, split, hparams: ModelHParams | None = None, eval_k: int = 10) -> SequentialModel:
    """Fit ``model`` on ``split.train_sequences``; restores the best validation epoch."""
    from seqstruct.metrics import evaluate_split

    hp = hparams or model.hparams
    users = sorted(split.train_sequences)
    windows = training_windows([split.train_sequences[u] for u in users], hp.max_len)
    if not windows:
        raise ValueError("no training sequence has two or more items")
    model.seen = split.train_items()
    val = list(split.val_instances)
    if not val:
        log.warning("empty validation set; training for max_epochs=%d", hp.max_epochs)

    rng = np.random.default_rng([hp.seed, 1])
    params = model.parameter_list()
    opt = Adam(params, lr=hp.lr, clip_norm=hp.clip_norm)
    model.history = []
    best_score, best_state, bad_epochs = -math.inf, None, 0

    for epoch in range(hp.max_epochs):
        started = time.perf_counter()
        losses = []
        for b, (x, y) in enumerate(iterate_batches(windows, hp.batch, rng)):
            try:
                loss = batch_loss(model, x, y, rng)
                opt.zero_grad()
                loss.backward()
                opt.step()
            except NonFiniteError as exc:
                raise TrainingDivergence(epoch, b, exc) from exc
            losses.append(float(loss.data))
        record = {"epoch": epoch, "loss": math.fsum(losses) / len(losses), "val_ndcg": None}
        if val:
            record["val_ndcg"] = evaluate_split(model, val, k=eval_k).ndcg
        model.history.append(record)
        log.info(
            "epoch %d loss %.4f val_ndcg %s (%.1fs)",
            epoch, record["loss"], record["val_ndcg"], time.perf_counter() - started,
        )
        if not val:
            continue
        if record["val_ndcg"] > best_score:
            best_score, best_state, bad_epochs = record["val_ndcg"], model.state_arrays(), 0
            model.best_epoch = epoch
        else:
            bad_epochs += 1
            if bad_epochs >= hp.patience:
                break
    if best_state is not None:
        model.load_arrays(best_state)
    else:
        model.best_epoch = len(model.history) - 1
    return model
