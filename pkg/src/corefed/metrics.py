"""Fairness and performance measurement over flattened parameter vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Shard
from .errors import MeasurementError
from .nn import Batch, ModelSpec, forward

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class RoundReport:
    """Observable output of one simulated round."""

    round: int
    mean_accuracy: float
    per_client_accuracy: dict[int, float]
    d_cosine_mean: float
    d_manhattan_mean: float
    contrastive_losses: dict[int, float | None] = field(repr=False)
    weights: dict[int, float] = field(repr=False)
    learning_rate: float = 0.0
    online: frozenset[int] = frozenset()

    @property
    def num_online(self) -> int:
        return len(self.online)

    @property
    def mean_contrastive_loss(self) -> float:
        values = [v for v in self.contrastive_losses.values() if v is not None]
        return float(np.mean(values)) if values else math.nan


def d_cosine(client_params: np.ndarray, global_params: np.ndarray) -> float:
    """Angular distance arccos(cos(client, global)) in [0, pi] radians."""
    if client_params.shape != global_params.shape:
        raise ValueError("parameter vectors have different lengths")
    norm_c = np.linalg.norm(client_params)
    norm_g = np.linalg.norm(global_params)
    if norm_c < _NORM_EPS or norm_g < _NORM_EPS:
        raise MeasurementError("angular distance undefined for zero-norm parameters")
    return float(np.arccos(np.clip(np.dot(client_params, global_params) / (norm_c * norm_g), -1.0, 1.0)))


def d_manhattan(client_params: np.ndarray, global_params: np.ndarray) -> float:
    """L1 distance over the flattened full parameter set."""
    if client_params.shape != global_params.shape:
        raise ValueError("parameter vectors have different lengths")
    return float(np.abs(client_params - global_params).sum())


def evaluate_accuracy(global_params: np.ndarray, spec: ModelSpec,
                      shards: list[Shard]) -> tuple[float, dict[int, float]]:
    """Per-client argmax accuracy on test slices, plus the unweighted mean.

    Clients with empty test slices are excluded from the mean. Argmax ties
    resolve to the lowest class index.
    """
    per_client = {}
    for shard in shards:
        if not len(shard.test):
            continue
        _, logits = forward(global_params, spec, Batch(shard.test.inputs, shard.test.labels))
        predictions = logits.argmax(axis=1)
        per_client[shard.client_id] = float(np.mean(predictions == shard.test.labels))
    if not per_client:
        raise MeasurementError("no shard has a non-empty test slice")
    return float(np.mean(list(per_client.values()))), per_client


def fairness_summary(local_models: dict[int, np.ndarray],
                     global_params: np.ndarray) -> tuple[float, float]:
    """Unweighted mean angular and Manhattan distances, locals vs global.

    Clients whose angular distance is unmeasurable (zero-norm model) are
    skipped from the cosine mean only.
    """
    if not local_models:
        raise ValueError("fairness summary needs at least one local model")
    cosines = []
    manhattans = []
    for params in local_models.values():
        try:
            cosines.append(d_cosine(params, global_params))
        except MeasurementError:
            pass
        manhattans.append(d_manhattan(params, global_params))
    cos_mean = float(np.mean(cosines)) if cosines else math.nan
    return cos_mean, float(np.mean(manhattans))
