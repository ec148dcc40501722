"""Train/test split construction for the two evaluation protocols.

Class-held-out splits (EAD) treat whole classes as anomalous; sliding-window
splits (IAD) cut long labeled series into fixed-length windows and evaluate
per timestamp.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..exceptions import ConfigError
from .corpus import Corpus, TimeSeriesInstance

EAD_TEST_FRACTION = 0.2  # held-out share of each normal class
WINDOW_ID_SEP = "#w"


@dataclass(frozen=True)
class ExperimentSplit:
    mode: str  # "ead" | "iad"
    train: Corpus
    test: Corpus
    normal_classes: Optional[frozenset[int]] = None
    window_length: Optional[int] = None
    window_stride: Optional[int] = None


def make_ead_split(corpus: Corpus, normal_classes, seed: int) -> ExperimentSplit:
    """Hold out whole classes as anomalies.

    Instances of ``normal_classes`` are split 80/20 into train and
    test-normal (seeded, per class); every instance of the remaining classes
    goes to the test side labeled anomalous at instance level.
    """
    normal_classes = frozenset(int(c) for c in normal_classes)
    all_classes = corpus.class_set
    if any(inst.class_label is None for inst in corpus):
        raise ConfigError("class-held-out split requires class labels on every instance")
    if not 1 < len(normal_classes) < len(all_classes):
        raise ConfigError(
            f"need 1 < |normal_classes| < {len(all_classes)}, got {len(normal_classes)}"
        )
    if not normal_classes <= all_classes:
        raise ConfigError(f"unknown classes {sorted(normal_classes - all_classes)}")

    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_normal_idx: list[int] = []
    for cls in sorted(normal_classes):
        members = [i for i, inst in enumerate(corpus) if inst.class_label == cls]
        order = rng.permutation(len(members))
        n_test = max(1, int(round(EAD_TEST_FRACTION * len(members))))
        held = {members[j] for j in order[:n_test]}
        test_normal_idx.extend(sorted(held))
        train_idx.extend(m for m in members if m not in held)
    anomaly_idx = [
        i for i, inst in enumerate(corpus) if inst.class_label not in normal_classes
    ]

    def with_flat_labels(inst: TimeSeriesInstance, anomalous: bool) -> TimeSeriesInstance:
        labels = np.full(inst.n_timestamps, anomalous, dtype=bool)
        return replace(inst, point_labels=labels)

    train = corpus.subset(sorted(train_idx))
    test_instances = tuple(
        [with_flat_labels(corpus.instances[i], False) for i in sorted(test_normal_idx)]
        + [with_flat_labels(corpus.instances[i], True) for i in sorted(anomaly_idx)]
    )
    test = Corpus(test_instances, feature_stats=corpus.feature_stats, origin=corpus.origin)
    return ExperimentSplit(
        mode="ead", train=train, test=test, normal_classes=normal_classes
    )


def window_instance(
    inst: TimeSeriesInstance, window_length: int, stride: int
) -> list[TimeSeriesInstance]:
    """Cut one series into windows; ids record the source offset."""
    if window_length > inst.n_timestamps:
        raise ConfigError(
            f"window_length {window_length} exceeds series length {inst.n_timestamps}"
        )
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    windows = []
    for start in range(0, inst.n_timestamps - window_length + 1, stride):
        stop = start + window_length
        labels = None if inst.point_labels is None else inst.point_labels[start:stop]
        windows.append(
            TimeSeriesInstance(
                values=inst.values[start:stop],
                id=f"{inst.id}{WINDOW_ID_SEP}{start:06d}",
                class_label=inst.class_label,
                point_labels=labels,
            )
        )
    return windows


def window_offset(window_id: str) -> tuple[str, int]:
    """Recover (source id, start offset) from a window id."""
    source, _, offset = window_id.rpartition(WINDOW_ID_SEP)
    return source, int(offset)


def unwindow_series(
    window_ids, window_values: np.ndarray, series_length: int
) -> np.ndarray:
    """Reassemble per-timestamp values from (possibly overlapping) windows.

    When windows overlap, the value for a timestamp comes from the last
    window covering it (windows applied in ascending start order).
    """
    width = window_values.shape[1]
    out = np.full((series_length,) + window_values.shape[2:], np.nan)
    order = np.argsort([window_offset(w)[1] for w in window_ids], kind="stable")
    for k in order:
        start = window_offset(window_ids[k])[1]
        out[start : start + width] = window_values[k]
    return out


def make_iad_split(
    corpus: Corpus, window_length: int, window_stride: int
) -> ExperimentSplit:
    """Window a labeled corpus for per-timestamp evaluation.

    Instances without any anomalous timestamp form the training portion;
    instances containing anomalies go to the test side with their labels.
    Train windows always carry all-false labels.
    """
    if window_length < 2:
        raise ConfigError(f"window_length must be >= 2, got {window_length}")
    train_windows: list[TimeSeriesInstance] = []
    test_windows: list[TimeSeriesInstance] = []
    for inst in corpus:
        has_anomaly = inst.point_labels is not None and bool(inst.point_labels.any())
        for win in window_instance(inst, window_length, window_stride):
            if has_anomaly:
                if win.point_labels is None:
                    win = replace(
                        win, point_labels=np.zeros(window_length, dtype=bool)
                    )
                test_windows.append(win)
            else:
                train_windows.append(
                    replace(win, point_labels=np.zeros(window_length, dtype=bool))
                )
    if not train_windows:
        raise ConfigError("no anomaly-free instances to train on")
    if not test_windows:
        raise ConfigError("no labeled anomalous instances to test on")
    stats = corpus.feature_stats
    return ExperimentSplit(
        mode="iad",
        train=Corpus(tuple(train_windows), feature_stats=stats, origin=corpus.origin),
        test=Corpus(tuple(test_windows), feature_stats=stats, origin=corpus.origin),
        window_length=window_length,
        window_stride=window_stride,
    )


def assert_no_leakage(split: ExperimentSplit) -> None:
    """Train and test must not share instances (checked by id sets)."""
    shared = set(split.train.ids) & set(split.test.ids)
    if shared:
        raise ConfigError(f"instances appear on both sides: {sorted(shared)[:5]}")
