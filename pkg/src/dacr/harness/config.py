"""Flat key-value experiment configuration."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from ..exceptions import ConfigError

ABLATIONS = ("none", "ab1", "ab2")
NOISE_GRID = (0.01, 0.05, 0.1, 0.5, 1.0)
HISTORY_GRID = (10, 20, 30, 40, 50)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    mode: str = "ead"
    dataset: str = "synthetic"  # or a corpus file path
    runs_dir: str = "runs"
    ablation: str = "none"
    seeds: tuple[int, ...] = (0, 1, 2)
    data_seed: int = 7

    # synthetic corpus shape
    n_classes: int = 4
    n_per_class: int = 100
    series_length: int = 50
    n_features: int = 3
    noise_level: float = 0.08
    class_separation: float = 1.0

    # split construction
    normal_classes: Optional[tuple[int, ...]] = (0, 1, 2)
    n_normal_classes: Optional[int] = None  # seeded choice when classes unset
    window_length: int = 100
    window_stride: int = 100
    iad_n_series: int = 4
    iad_series_length: int = 800

    # stage hyperparameters
    batch_size: int = 8
    vae_lr: float = 1e-4
    encoder_lr: float = 1e-3
    reconstructor_lr: float = 1e-3
    vae_iterations: int = 200
    encoder_iterations: int = 200
    reconstructor_iterations: int = 200
    history: int = 20
    latent_dim: int = 16
    embed_dim: int = 64
    alpha_var: float = 0.1
    beta_var: float = 0.1
    extra_ratio: float = 1.0

    def __post_init__(self):
        if self.mode not in ("ead", "iad"):
            raise ConfigError(f"mode must be ead or iad, got {self.mode!r}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for key in ("batch_size", "vae_iterations", "encoder_iterations",
                    "reconstructor_iterations", "history", "latent_dim", "embed_dim"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative")

    def items(self) -> dict:
        """Flat dict snapshot, deterministic ordering left to caller."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            out[f.name] = value
        return out

    def experiment_items(self) -> dict:
        """Snapshot without environment-only keys, used for hashing/reports.

        ``runs_dir`` says where artifacts live, not what was run, so two
        runs of one experiment in different directories must still hash and
        report identically.
        """
        out = self.items()
        out.pop("runs_dir")
        return out

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)


def _coerce(name: str, raw: str, target_type):
    raw = raw.strip()
    if target_type is str:
        return raw
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    raise ConfigError(f"cannot parse config key {name!r}")


_TUPLE_INT_KEYS = {"seeds", "normal_classes"}
_OPTIONAL_INT_KEYS = {"n_normal_classes"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines ('#' starts a comment) into a config."""
    by_name = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in by_name:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in _TUPLE_INT_KEYS:
            if raw.lower() in ("", "none"):
                values[key] = None
            else:
                try:
                    values[key] = tuple(int(v) for v in raw.split(",") if v.strip())
                except ValueError as exc:
                    raise ConfigError(f"line {lineno}: {exc}") from exc
        elif key in _OPTIONAL_INT_KEYS:
            values[key] = None if raw.lower() in ("", "none") else int(raw)
        else:
            field_type = type(getattr(ExperimentConfig(), key))
            try:
                values[key] = _coerce(key, raw, field_type)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from exc
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for key, value in config.items().items():
        lines.append(f"{key} = {'' if value is None else value}")
    return "\n".join(lines) + "\n"
