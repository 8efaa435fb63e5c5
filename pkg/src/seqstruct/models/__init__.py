"""Next-item models: causal self-attention and gated-recurrent."""

from seqstruct.models.attention import AttentionModel
from seqstruct.models.base import ConfigError, ModelHParams, ScoredList, SequentialModel, restore, top_k
from seqstruct.models.recurrent import RecurrentModel
from seqstruct.models.training import TrainingDivergence, make_batch, train, training_windows

_CLASSES = {"attention": AttentionModel, "recurrent": RecurrentModel}


def model_class(architecture: str):
    try:
        return _CLASSES[architecture]
    except KeyError:
        raise ConfigError(f"unknown architecture {architecture!r}") from None


def build_model(hparams: ModelHParams, catalog_size: int) -> SequentialModel:
    """Untrained model; ``catalog_size`` counts the padding id."""
    return model_class(hparams.architecture)(hparams, catalog_size)


def load_model(path) -> SequentialModel:
    return restore(path, model_class)


def recommend_top_k(model: SequentialModel, instance, k: int = 10) -> ScoredList | None:
    return model.recommend(instance.user, instance.input, k)


def score_next(model: SequentialModel, items):
    return model.score_next(items)


__all__ = [
    "AttentionModel",
    "ConfigError",
    "ModelHParams",
    "RecurrentModel",
    "ScoredList",
    "SequentialModel",
    "TrainingDivergence",
    "build_model",
    "load_model",
    "make_batch",
    "model_class",
    "recommend_top_k",
    "score_next",
    "top_k",
    "train",
    "training_windows",
]
