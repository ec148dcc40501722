"""Run reports: per-seed AUCs with machine- and human-readable renderings.

The report files written to a run directory are byte-deterministic for a
given config and seeds; wall-clock timing goes to a separate file so
repeated runs can be compared bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RunReport:
    name: str
    mode: str
    ablation: str
    per_seed_auc: dict[int, float]
    config_items: dict
    checkpoint_paths: tuple[str, ...]
    wall_clock_seconds: float

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(sorted(self.per_seed_auc))

    @property
    def aucs(self) -> tuple[float, ...]:
        return tuple(self.per_seed_auc[s] for s in self.seeds)

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def std_auc(self) -> float:
        return float(np.std(self.aucs))

    def to_tsv(self) -> str:
        lines = ["metric\tseed\tvalue"]
        for seed in self.seeds:
            lines.append(f"auc\t{seed}\t{self.per_seed_auc[seed]!r}")
        lines.append(f"auc_mean\t-\t{self.mean_auc!r}")
        lines.append(f"auc_std\t-\t{self.std_auc!r}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = [
            f"run: {self.name}",
            f"mode: {self.mode}",
            f"ablation: {self.ablation}",
            "",
            "per-seed AUC:",
        ]
        for seed in self.seeds:
            lines.append(f"  seed {seed}: {self.per_seed_auc[seed]:.6f}")
        lines.append(f"mean AUC: {self.mean_auc:.6f}")
        lines.append(f"std AUC:  {self.std_auc:.6f}")
        lines.append("")
        lines.append("checkpoints:")
        for path in self.checkpoint_paths:
            lines.append(f"  {path}")
        lines.append("")
        lines.append("config:")
        for key in sorted(self.config_items):
            lines.append(f"  {key} = {self.config_items[key]}")
        return "\n".join(lines) + "\n"

    def write(self, run_dir) -> None:
        run_dir = Path(run_dir)
        (run_dir / "report.txt").write_text(self.to_text())
        (run_dir / "report.tsv").write_text(self.to_tsv())
        (run_dir / "timing.txt").write_text(
            f"wall_clock_seconds={self.wall_clock_seconds:.3f}\n"
        )


@dataclass(frozen=True)
class SweepReport:
    axis: str
    values: tuple
    reports: tuple[RunReport, ...]

    def to_tsv(self) -> str:
        lines = ["axis_value\tmean_auc\tstd_auc\tper_seed"]
        for value, report in zip(self.values, self.reports):
            per_seed = ",".join(repr(a) for a in report.aucs)
            lines.append(f"{value}\t{report.mean_auc!r}\t{report.std_auc!r}\t{per_seed}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_tsv())
