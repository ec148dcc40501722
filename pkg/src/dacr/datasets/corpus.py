"""Core corpus model: validated instances plus per-feature normalization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..exceptions import ShapeError
from ..validation import check_instance_matrix, check_point_labels

STD_FLOOR = 1e-8


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeSeriesInstance:
    """One T x F sequence, the unit of ingestion and scoring.

    ``point_labels`` (True = anomalous timestamp) are evaluation-only and
    never visible to training code. ``class_label`` is used to build
    class-held-out splits.
    """

    values: np.ndarray
    id: str
    class_label: Optional[int] = None
    point_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        values = _freeze(check_instance_matrix(self.values, name=f"instance {self.id}"))
        object.__setattr__(self, "values", values)
        if self.point_labels is not None:
            labels = _freeze(check_point_labels(self.point_labels, values.shape[0]))
            object.__setattr__(self, "point_labels", labels)
        if self.class_label is not None:
            object.__setattr__(self, "class_label", int(self.class_label))

    @property
    def n_timestamps(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature mean/std, always computed on training data only."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = _freeze(np.asarray(self.mean, dtype=np.float64))
        std = _freeze(np.asarray(self.std, dtype=np.float64))
        if mean.shape != std.shape or mean.ndim != 1:
            raise ShapeError("feature stats must be 1-d arrays of equal length")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class Corpus:
    """Ordered, immutable collection of instances sharing a feature count."""

    instances: tuple[TimeSeriesInstance, ...]
    feature_stats: Optional[FeatureStats] = None
    origin: str = "unknown"

    def __post_init__(self):
        instances = tuple(self.instances)
        if not instances:
            raise ShapeError("corpus must contain at least one instance")
        f = instances[0].n_features
        for inst in instances:
            if inst.n_features != f:
                raise ShapeError(
                    f"instance {inst.id} has F={inst.n_features}, expected F={f}"
                )
        object.__setattr__(self, "instances", instances)

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    @property
    def n_features(self) -> int:
        return self.instances[0].n_features

    @property
    def n_timestamps(self) -> int:
        """Common sequence length; raises if instances disagree."""
        lengths = {inst.n_timestamps for inst in self.instances}
        if len(lengths) != 1:
            raise ShapeError(f"corpus has mixed sequence lengths {sorted(lengths)}")
        return lengths.pop()

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(inst.id for inst in self.instances)

    @property
    def class_set(self) -> frozenset[int]:
        return frozenset(
            inst.class_label for inst in self.instances if inst.class_label is not None
        )

    def to_array(self) -> np.ndarray:
        """Stack instances into an (N, T, F) array; requires a common T."""
        self.n_timestamps  # raises on mixed lengths
        return np.stack([inst.values for inst in self.instances])

    def subset(self, indices: Sequence[int], origin: Optional[str] = None) -> "Corpus":
        picked = tuple(self.instances[i] for i in indices)
        return Corpus(picked, feature_stats=self.feature_stats,
                      origin=self.origin if origin is None else origin)


def corpus_from_array(
    values: np.ndarray,
    origin: str = "unknown",
    class_labels: Optional[Sequence[int]] = None,
    point_labels: Optional[np.ndarray] = None,
    id_prefix: str = "i",
) -> Corpus:
    """Build a corpus from an (N, T, F) array with optional label sidecars."""
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 3:
        raise ShapeError(f"expected rank-3 array (N x T x F), got ndim={values.ndim}")
    n = values.shape[0]
    if class_labels is not None and len(class_labels) != n:
        raise ShapeError(f"class_labels has length {len(class_labels)}, expected {n}")
    instances = []
    for i in range(n):
        instances.append(
            TimeSeriesInstance(
                values=values[i],
                id=f"{id_prefix}{i:05d}",
                class_label=None if class_labels is None else class_labels[i],
                point_labels=None if point_labels is None else point_labels[i],
            )
        )
    return Corpus(tuple(instances), origin=origin)


def compute_feature_stats(corpus: Corpus) -> FeatureStats:
    """Per-feature mean/std over every timestamp of every instance.

    Call this on training data only; test corpora must reuse the training
    stats so that no test information leaks into the transform.
    """
    stacked = np.concatenate([inst.values for inst in corpus], axis=0).astype(np.float64)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return FeatureStats(mean=mean, std=std)


def normalize(corpus: Corpus, stats: Optional[FeatureStats] = None) -> Corpus:
    """Z-score each feature column.

    Without explicit ``stats`` the corpus is treated as training data and
    its own stats are used; pass training stats to transform held-out data
    with identical parameters.
    """
    if stats is None:
        stats = corpus.feature_stats or compute_feature_stats(corpus)
    if stats.mean.shape[0] != corpus.n_features:
        raise ShapeError(
            f"stats cover {stats.mean.shape[0]} features, corpus has {corpus.n_features}"
        )
    mean = stats.mean.astype(np.float32)
    std = stats.std.astype(np.float32)
    transformed = tuple(
        replace(inst, values=(inst.values - mean) / std) for inst in corpus
    )
    return Corpus(transformed, feature_stats=stats, origin=corpus.origin)
