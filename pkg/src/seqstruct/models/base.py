"""Shared machinery for next-item scorers.

Models work on *model ids*: item index + 1, with 0 reserved for padding.
The public scoring API maps back to the log's dense item indices, so
callers never see the shift.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from seqstruct.diffcore import Tensor, load_checkpoint, no_grad, ops, save_checkpoint

PAD = 0
ARCHITECTURES = ("attention", "recurrent")


class ConfigError(ValueError):
    pass


@dataclass
class ModelHParams:
    architecture: str = "attention"
    hidden: int = 64
    blocks: int = 2
    heads: int = 2
    rnn_layers: int = 1
    max_len: int = 128
    batch: int = 128
    lr: float = 1e-3
    dropout: float = 0.1
    patience: int = 5
    max_epochs: int = 100
    seed: int = 0
    clip_norm: float | None = None
    dtype: str = "float32"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        for name in ("hidden", "blocks", "heads", "rnn_layers", "max_len", "batch", "max_epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden % self.heads:
            raise ConfigError(f"hidden={self.hidden} is not divisible by heads={self.heads}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelHParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model parameters: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScoredList:
    user: int
    items: tuple[int, ...]
    scores: tuple[float, ...]


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best scores per row; ties go to the lower index."""
    k = min(k, scores.shape[-1])
    return np.argsort(-scores, axis=-1, kind="stable")[..., :k]


class SequentialModel:
    """Next-item scorer; subclasses define the parameters and ``hidden``."""

    def __init__(self, hparams: ModelHParams, catalog_size: int):
        if catalog_size < 2:
            raise ConfigError(f"catalog_size must be >= 2 (padding + items), got {catalog_size}")
        self.hparams = hparams
        self.catalog_size = catalog_size
        self.dtype = np.dtype(hparams.dtype)
        self.params: dict[str, Tensor] = {}
        self.seen = np.ones(catalog_size - 1, dtype=bool)
        self.history: list[dict] = []
        self.best_epoch: int | None = None
        self._init_params(np.random.default_rng(hparams.seed))

    @property
    def n_items(self) -> int:
        return self.catalog_size - 1

    def _uniform(self, rng, shape, bound=None) -> Tensor:
        bound = 1.0 / math.sqrt(self.hparams.hidden) if bound is None else bound
        return Tensor(rng.uniform(-bound, bound, size=shape).astype(self.dtype), requires_grad=True)

    def _zeros(self, shape) -> Tensor:
        return Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True)

    def _ones(self, shape) -> Tensor:
        return Tensor(np.ones(shape, dtype=self.dtype), requires_grad=True)

    def _init_params(self, rng) -> None:
        raise NotImplementedError

    def hidden(self, seq: np.ndarray, training: bool = False, rng=None) -> Tensor:
        """(B, T) model ids, left-padded -> (B, T, H) states."""
        raise NotImplementedError

    def logits(self, states: Tensor) -> Tensor:
        """(N, H) states -> (N, catalog_size) scores."""
        raise NotImplementedError

    def parameter_list(self) -> list[Tensor]:
        return [self.params[name] for name in sorted(self.params)]

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if arrays[name].shape != p.data.shape:
                raise ConfigError(f"parameter {name}: shape {arrays[name].shape} != {p.data.shape}")
            p.data = arrays[name].astype(self.dtype, copy=True)

    # scoring

    def prepare_input(self, items) -> list[int]:
        """Drop items unseen in training and keep the most recent ``max_len``."""
        kept = [int(i) for i in items if 0 <= i < self.n_items and self.seen[i]]
        return kept[-self.hparams.max_len:]

    def score_batch(self, inputs: list[list[int]]) -> np.ndarray:
        """Scores over the log's items for each prepared, non-empty input."""
        if not inputs:
            return np.zeros((0, self.n_items), dtype=np.float64)
        width = max(len(s) for s in inputs)
        if min(len(s) for s in inputs) == 0:
            raise ValueError("score_batch: empty input; drop it before scoring")
        seq = np.zeros((len(inputs), width), dtype=np.int64)
        for j, s in enumerate(inputs):
            seq[j, width - len(s):] = np.asarray(s, dtype=np.int64) + 1
        with no_grad():
            states = self.hidden(seq, training=False)
            last = Tensor(states.data[:, -1, :])
            scores = self.logits(last).data
        return scores[:, 1:].astype(np.float64)

    def score_next(self, items) -> np.ndarray | None:
        """Score vector over items for one history; None if nothing usable remains."""
        prepared = self.prepare_input(items)
        if not prepared:
            return None
        return self.score_batch([prepared])[0]

    def recommend(self, user: int, items, k: int) -> ScoredList | None:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        scores = self.score_next(items)
        if scores is None:
            return None
        idx = top_k(scores, k)
        return ScoredList(user, tuple(idx.tolist()), tuple(scores[idx].tolist()))

    # persistence

    def save(self, path) -> None:
        arrays = {f"param/{n}": a for n, a in self.state_arrays().items()}
        arrays["seen"] = self.seen.astype(np.uint8)
        meta = {
            "hparams": self.hparams.to_dict(),
            "catalog_size": self.catalog_size,
            "history": self.history,
            "best_epoch": self.best_epoch,
        }
        save_checkpoint(path, arrays, meta)


def left_pad(sequences: list[np.ndarray], width: int | None = None) -> np.ndarray:
    width = width or max(len(s) for s in sequences)
    out = np.zeros((len(sequences), width), dtype=np.int64)
    for j, s in enumerate(sequences):
        if len(s):
            out[j, width - len(s):] = s
    return out


def pad_mask(seq: np.ndarray) -> np.ndarray:
    return seq != PAD


def mask_states(x: Tensor, mask: np.ndarray) -> Tensor:
    return ops.mul(x, mask[..., None].astype(x.dtype))


def restore(path, model_cls_for):
    arrays, meta = load_checkpoint(path)
    hp = ModelHParams.from_dict(meta["hparams"])
    model = model_cls_for(hp.architecture)(hp, meta["catalog_size"])
    model.load_arrays({k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")})
    model.seen = arrays["seen"].astype(bool)
    model.history = meta["history"]
    model.best_epoch = meta["best_epoch"]
    return model
