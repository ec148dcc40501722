"""Synthetic multivariate corpora for desk-scale experiments.

Each class is a sinusoid mixture with class-specific frequencies and
phases. Features of one instance share a random phase and amplitude
envelope, so feature values are mutually predictable and a dependency-aware
reconstructor has real structure to exploit. Anomalies (spike, drift,
freq-shift) are injected into a labeled segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigError
from .corpus import Corpus, TimeSeriesInstance

ANOMALY_KINDS = ("spike", "drift", "freq-shift")


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 4
    n_per_class: int = 100
    n_timestamps: int = 50
    n_features: int = 3
    anomaly_kinds: tuple[str, ...] = ()
    anomaly_fraction: float = 0.0
    noise_level: float = 0.08
    class_separation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1 or self.n_per_class < 1:
            raise ConfigError("n_classes and n_per_class must be positive")
        if self.n_timestamps < 2 or self.n_features < 1:
            raise ConfigError("need n_timestamps >= 2 and n_features >= 1")
        unknown = set(self.anomaly_kinds) - set(ANOMALY_KINDS)
        if unknown:
            raise ConfigError(f"unknown anomaly kinds {sorted(unknown)}")
        if self.anomaly_kinds and not 0.0 < self.anomaly_fraction <= 1.0:
            raise ConfigError("anomaly_fraction must be in (0, 1] when kinds are given")


def _class_waveform(spec: SyntheticSpec, cls: int, phase: float, amp: float,
                    rng: np.random.Generator) -> np.ndarray:
    t = np.arange(spec.n_timestamps, dtype=np.float64)
    base = 2.0 * np.pi / spec.n_timestamps
    values = np.empty((spec.n_timestamps, spec.n_features))
    for f in range(spec.n_features):
        # class sets the fundamental; features are harmonics of it, so one
        # feature is informative about the others at the same timestamp
        freq = base * (2.0 + cls * spec.class_separation) * (1.0 + 0.5 * f)
        feat_phase = 0.9 * cls + 0.6 * f
        wave = np.sin(freq * t + feat_phase + phase)
        wave += 0.3 * np.sin(2.0 * freq * t + 2.0 * feat_phase + phase)
        values[:, f] = amp * wave
    values += rng.normal(0.0, spec.noise_level, size=values.shape)
    return values


def _inject_anomaly(values: np.ndarray, kind: str, rng: np.random.Generator):
    t_len = values.shape[0]
    seg_len = max(2, t_len // 8)
    start = int(rng.integers(1, t_len - seg_len))
    stop = start + seg_len
    labels = np.zeros(t_len, dtype=bool)
    labels[start:stop] = True
    feature = int(rng.integers(0, values.shape[1]))
    if kind == "spike":
        values[start:stop, feature] += rng.choice([-1.0, 1.0]) * rng.uniform(2.5, 4.0)
    elif kind == "drift":
        ramp = np.linspace(0.0, rng.uniform(2.0, 3.5), seg_len)
        values[start:stop, feature] += rng.choice([-1.0, 1.0]) * ramp
    elif kind == "freq-shift":
        t = np.arange(seg_len, dtype=np.float64)
        values[start:stop, feature] = np.sin(2.0 * np.pi * t / max(2.0, seg_len / 3.0))
    return values, labels


def make_synthetic(spec: SyntheticSpec) -> Corpus:
    """Generate a labeled corpus as described by the spec dataclass."""
    rng = np.random.default_rng(spec.seed)
    instances = []
    idx = 0
    for cls in range(spec.n_classes):
        for _ in range(spec.n_per_class):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.8, 1.2)
            values = _class_waveform(spec, cls, phase, amp, rng)
            point_labels = None
            if spec.anomaly_kinds and rng.random() < spec.anomaly_fraction:
                kind = spec.anomaly_kinds[int(rng.integers(len(spec.anomaly_kinds)))]
                values, point_labels = _inject_anomaly(values, kind, rng)
            instances.append(
                TimeSeriesInstance(
                    values=values.astype(np.float32),
                    id=f"syn{idx:05d}",
                    class_label=cls,
                    point_labels=point_labels,
                )
            )
            idx += 1
    return Corpus(tuple(instances), origin="synthetic")


def make_synthetic_iad(
    n_series: int = 4,
    series_length: int = 800,
    n_features: int = 3,
    anomaly_kinds: tuple[str, ...] = ("spike", "drift"),
    anomalies_per_series: int = 3,
    noise_level: float = 0.08,
    seed: int = 0,
) -> Corpus:
    """Long single-class series; the anomalous half carries point labels."""
    rng = np.random.default_rng(seed)
    spec = SyntheticSpec(
        n_classes=1,
        n_per_class=1,
        n_timestamps=series_length,
        n_features=n_features,
        noise_level=noise_level,
        seed=seed,
    )
    instances = []
    for i in range(n_series):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.8, 1.2)
        values = _class_waveform(spec, 0, phase, amp, rng)
        if i % 2 == 0:
            inst = TimeSeriesInstance(
                values=values.astype(np.float32), id=f"iad{i:03d}", class_label=0
            )
        else:
            labels = np.zeros(series_length, dtype=bool)
            for _ in range(anomalies_per_series):
                kind = anomaly_kinds[int(rng.integers(len(anomaly_kinds)))]
                values, seg = _inject_anomaly(values, kind, rng)
                labels |= seg
            inst = TimeSeriesInstance(
                values=values.astype(np.float32),
                id=f"iad{i:03d}",
                class_label=0,
                point_labels=labels,
            )
        instances.append(inst)
    return Corpus(tuple(instances), origin="synthetic")
