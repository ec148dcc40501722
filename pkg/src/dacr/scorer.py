"""Anomaly scoring: per-feature error calibration and ranked evaluation.

The calibration anchor for feature f is the largest squared reconstruction
error seen anywhere in the training data. A test timestamp scores the
maximum percentage by which any feature's error exceeds its anchor; any
strictly positive score marks an anomaly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .datasets.corpus import Corpus, TimeSeriesInstance
from .encoder import FeatureExtractor
from .exceptions import ConfigError, EvaluationError, ShapeError
from .reconstructor import DependencyReconstructor, predict_errors

EPSILON_FLOOR = 1e-12
WARMUP_SCORE = -100.0  # minimum possible value; timestamps without history


@dataclass(frozen=True)
class CalibrationTable:
    """Per-feature maximum training squared error, floored away from zero."""

    err: np.ndarray
    epsilon_floor: float = EPSILON_FLOOR

    def __post_init__(self):
        err = np.asarray(self.err, dtype=np.float64)
        if err.ndim != 1:
            raise ShapeError("calibration table must be a 1-d per-feature vector")
        if (err < 0).any():
            raise ConfigError("squared errors cannot be negative")
        err = np.maximum(err, self.epsilon_floor)
        err.flags.writeable = False
        object.__setattr__(self, "err", err)

    @property
    def n_features(self) -> int:
        return self.err.shape[0]

    def save(self, path) -> None:
        lines = [f"{f}={self.err[f]!r}" for f in range(self.n_features)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "CalibrationTable":
        err = {}
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            key, value = line.split("=", 1)
            err[int(key)] = float(value)
        return cls(err=np.array([err[f] for f in sorted(err)]))


@dataclass(frozen=True)
class ScoreSeries:
    """Per-timestamp anomaly scores (percent) with the > 0 labeling rule."""

    scores: np.ndarray
    instance_id: str = ""

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)

    @property
    def labels(self) -> np.ndarray:
        return self.scores > 0.0


def scores_from_errors(sq_errors: np.ndarray, table: CalibrationTable) -> np.ndarray:
    """Percent increase of the worst feature over its calibration anchor.

    ``sq_errors``: (T, F) with NaN rows for warm-up timestamps. Warm-up
    rows receive the sentinel minimum score.
    """
    sq_errors = np.asarray(sq_errors, dtype=np.float64)
    if sq_errors.ndim != 2 or sq_errors.shape[1] != table.n_features:
        raise ShapeError(
            f"errors shaped {sq_errors.shape} do not match table with "
            f"F={table.n_features}"
        )
    percent = (sq_errors - table.err) / table.err * 100.0
    worst = np.where(np.isnan(percent), -np.inf, percent).max(axis=1)
    valid = np.isfinite(sq_errors).all(axis=1)
    return np.where(valid, worst, WARMUP_SCORE)


def calibrate(
    model: DependencyReconstructor,
    extractors: list[FeatureExtractor],
    train: Corpus,
) -> CalibrationTable:
    """Exact per-feature maximum squared error over all training data."""
    if len(train) == 0:
        raise ConfigError("cannot calibrate on an empty corpus")
    errors = predict_errors(model, extractors, train)  # (N, T, F), NaN warm-up
    with np.errstate(all="ignore"):
        per_feature = np.nanmax(errors, axis=(0, 1))
    return CalibrationTable(err=per_feature)


def score(
    model: DependencyReconstructor,
    extractors: list[FeatureExtractor],
    table: CalibrationTable,
    instance: TimeSeriesInstance,
) -> ScoreSeries:
    """Score one instance over its full timeline."""
    corpus = Corpus((instance,), origin="scoring")
    if corpus.n_features != table.n_features:
        raise ShapeError(
            f"instance has F={corpus.n_features}, table has F={table.n_features}"
        )
    errors = predict_errors(model, extractors, corpus)[0]
    return ScoreSeries(scores=scores_from_errors(errors, table), instance_id=instance.id)


def score_corpus(
    model: DependencyReconstructor,
    extractors: list[FeatureExtractor],
    table: CalibrationTable,
    corpus: Corpus,
) -> list[ScoreSeries]:
    if corpus.n_features != table.n_features:
        raise ShapeError(
            f"corpus has F={corpus.n_features}, table has F={table.n_features}"
        )
    errors = predict_errors(model, extractors, corpus)
    return [
        ScoreSeries(scores=scores_from_errors(errors[i], table), instance_id=inst.id)
        for i, inst in enumerate(corpus)
    ]


def instance_score(series: ScoreSeries) -> float:
    """One score per instance: the worst timestamp."""
    if series.scores.size == 0:
        raise ConfigError("cannot aggregate an empty score series")
    return float(series.scores.max())


def evaluate_auc(scores, labels) -> float:
    """ROC-AUC via the rank statistic; tied scores contribute 0.5.

    Equivalent to the probability that a random anomalous point outranks a
    random normal one.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError("scores and labels must be equal-length 1-d arrays")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs both an anomalous and a normal point")
    ranks = rankdata(scores)  # average ranks resolve ties as 0.5
    rank_sum = ranks[labels].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def collect_timestamp_scores(
    series_list: list[ScoreSeries], corpus: Corpus, warmup: int
) -> tuple[np.ndarray, np.ndarray]:
    """Flatten per-timestamp scores and labels, dropping warm-up stamps."""
    all_scores, all_labels = [], []
    for series, inst in zip(series_list, corpus):
        if inst.point_labels is None:
            raise EvaluationError(f"instance {inst.id} has no point labels")
        all_scores.append(series.scores[warmup:])
        all_labels.append(inst.point_labels[warmup:])
    return np.concatenate(all_scores), np.concatenate(all_labels)
