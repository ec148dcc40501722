"""End-to-end orchestration with per-stage checkpoints and resume.

A run directory is owned by one process (lock file). Every stage writes
its artifacts once; re-running with the same config loads whatever already
exists, so an interrupted run resumes into exactly the state an
uninterrupted run would have reached. Stage randomness is derived from the
run seed and stage name, never from carried-over generator state.
"""

from __future__ import annotations

import os
import time
from pathlib import Path

import numpy as np

from ..augmentor import NoiseSpec, generate_extra, load_vae, save_vae, train_vae
from ..datasets.corpus import Corpus, compute_feature_stats, normalize
from ..datasets.manifest import load_corpus, save_corpus
from ..datasets.splits import (
    ExperimentSplit,
    assert_no_leakage,
    make_ead_split,
    make_iad_split,
)
from ..datasets.synthetic import SyntheticSpec, make_synthetic, make_synthetic_iad
from ..encoder import (
    load_extractor,
    save_extractor,
    train_extractors,
    train_reconstruction_extractors,
)
from ..exceptions import ConfigError, StateError
from ..reconstructor import load_reconstructor, save_reconstructor, train_reconstructor
from ..scorer import (
    CalibrationTable,
    calibrate,
    collect_timestamp_scores,
    evaluate_auc,
    instance_score,
    score_corpus,
)
from ..utils import derive_seed, stable_config_hash
from .config import ExperimentConfig, dump_config
from .reports import RunReport


class RunLock:
    """Exclusive ownership of a run directory via an O_EXCL lock file."""

    def __init__(self, run_dir: Path):
        self.path = Path(run_dir) / "lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StateError(
                f"run directory {self.path.parent} is owned by another process "
                f"(remove {self.path} if that process is gone)"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"pid={os.getpid()}\n")
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def build_corpus(config: ExperimentConfig) -> Corpus:
    if config.dataset != "synthetic":
        return load_corpus(config.dataset)
    if config.mode == "iad":
        return make_synthetic_iad(
            n_series=config.iad_n_series,
            series_length=config.iad_series_length,
            n_features=config.n_features,
            noise_level=config.noise_level,
            seed=config.data_seed,
        )
    return make_synthetic(
        SyntheticSpec(
            n_classes=config.n_classes,
            n_per_class=config.n_per_class,
            n_timestamps=config.series_length,
            n_features=config.n_features,
            noise_level=config.noise_level,
            class_separation=config.class_separation,
            seed=config.data_seed,
        )
    )


def _pick_normal_classes(config: ExperimentConfig, corpus: Corpus, seed: int):
    if config.normal_classes is not None:
        return config.normal_classes
    if config.n_normal_classes is None:
        raise ConfigError("either normal_classes or n_normal_classes must be set")
    classes = sorted(corpus.class_set)
    rng = np.random.default_rng(derive_seed(seed, "class-choice"))
    picked = rng.choice(len(classes), size=config.n_normal_classes, replace=False)
    return tuple(classes[i] for i in sorted(picked))


def make_split(config: ExperimentConfig, corpus: Corpus, seed: int) -> ExperimentSplit:
    """Split, then normalize both sides with training statistics."""
    if config.mode == "ead":
        split = make_ead_split(corpus, _pick_normal_classes(config, corpus, seed), seed)
    else:
        split = make_iad_split(corpus, config.window_length, config.window_stride)
    assert_no_leakage(split)
    stats = compute_feature_stats(split.train)
    return ExperimentSplit(
        mode=split.mode,
        train=normalize(split.train, stats),
        test=normalize(split.test, stats),
        normal_classes=split.normal_classes,
        window_length=split.window_length,
        window_stride=split.window_stride,
    )


def _write_scores_tsv(path: Path, series_list, corpus: Corpus) -> None:
    lines = ["instance_id\tt\tscore\tlabel"]
    for series, inst in zip(series_list, corpus):
        labels = inst.point_labels
        for t, value in enumerate(series.scores):
            label = "" if labels is None else int(labels[t])
            lines.append(f"{inst.id}\t{t}\t{value!r}\t{label}")
    path.write_text("\n".join(lines) + "\n")


def evaluate_split(config: ExperimentConfig, split: ExperimentSplit, series_list) -> float:
    """EAD: instance-level AUC of max scores. IAD: timestamp-level AUC."""
    if config.mode == "ead":
        scores = [instance_score(s) for s in series_list]
        labels = [bool(inst.point_labels.any()) for inst in split.test]
        return evaluate_auc(scores, labels)
    scores, labels = collect_timestamp_scores(series_list, split.test, warmup=config.history)
    return evaluate_auc(scores, labels)


def run_single_seed(
    config: ExperimentConfig,
    run_dir: Path,
    seed: int,
    stop_after_stage: int | None = None,
) -> float | None:
    """Execute (or resume) one seed; returns its AUC, or None if stopped."""
    seed_dir = run_dir / f"seed{seed}"
    stage1 = seed_dir / "stage1"
    stage2 = seed_dir / "stage2"
    stage3 = seed_dir / "stage3"
    for d in (stage1, stage2 / "encoders", stage3):
        d.mkdir(parents=True, exist_ok=True)

    auc_file = seed_dir / "auc.txt"
    if auc_file.exists():
        return float(auc_file.read_text().strip())

    corpus = build_corpus(config)
    split = make_split(config, corpus, seed)
    train = split.train
    use_augmentation = config.ablation == "none"
    use_contrastive = config.ablation != "ab2"

    # stage 1: distribution augmentor
    vae = None
    if use_augmentation:
        vae_path = stage1 / "vae.ckpt"
        if vae_path.exists():
            vae = load_vae(vae_path)
        else:
            vae = train_vae(
                train,
                iterations=config.vae_iterations,
                lr=config.vae_lr,
                batch_size=config.batch_size,
                latent_dim=config.latent_dim,
                seed=derive_seed(seed, "stage1"),
            )
            save_vae(vae, vae_path)
    if stop_after_stage == 1:
        return None

    # stage 2: extra data + feature extractors
    extra = None
    if use_augmentation:
        extra_path = stage2 / "extra.corpus"
        if extra_path.exists():
            extra = load_corpus(extra_path)
        else:
            extra = generate_extra(
                vae,
                train,
                NoiseSpec(alpha_var=config.alpha_var, beta_var=config.beta_var),
                count=max(1, int(round(config.extra_ratio * len(train)))),
                seed=derive_seed(seed, "stage2a"),
            )
            save_corpus(extra, extra_path)

    encoder_paths = [
        stage2 / "encoders" / f"f{f}.ckpt" for f in range(train.n_features)
    ]
    if all(p.exists() for p in encoder_paths):
        extractors = [load_extractor(p) for p in encoder_paths]
    else:
        if use_contrastive:
            extractors = train_extractors(
                train,
                extra,
                iterations=config.encoder_iterations,
                lr=config.encoder_lr,
                batch_size=config.batch_size,
                embed_dim=config.embed_dim,
                seed=derive_seed(seed, "stage2b"),
            )
        else:
            extractors = train_reconstruction_extractors(
                train,
                iterations=config.encoder_iterations,
                lr=config.encoder_lr,
                batch_size=config.batch_size,
                embed_dim=config.embed_dim,
                seed=derive_seed(seed, "stage2b"),
            )
        for ext, path in zip(extractors, encoder_paths):
            save_extractor(ext, path)
    if stop_after_stage == 2:
        return None

    # stage 3: reconstructor + calibration
    recon_path = stage3 / "reconstructor.ckpt"
    calib_path = stage3 / "calibration.txt"
    if recon_path.exists() and calib_path.exists():
        model = load_reconstructor(recon_path)
        table = CalibrationTable.load(calib_path)
    else:
        model = train_reconstructor(
            train,
            extractors,
            history=config.history,
            iterations=config.reconstructor_iterations,
            lr=config.reconstructor_lr,
            batch_size=config.batch_size,
            seed=derive_seed(seed, "stage3"),
        )
        save_reconstructor(model, recon_path)
        table = calibrate(model, extractors, train)
        table.save(calib_path)
    if stop_after_stage == 3:
        return None

    # scoring + evaluation
    series_list = score_corpus(model, extractors, table, split.test)
    _write_scores_tsv(seed_dir / "scores.tsv", series_list, split.test)
    auc = evaluate_split(config, split, series_list)
    auc_file.write_text(f"{auc!r}\n")
    return auc


def _seed_checkpoints(config: ExperimentConfig, seed: int) -> list[str]:
    base = f"seed{seed}"
    paths = []
    if config.ablation == "none":
        paths.append(f"{base}/stage1/vae.ckpt")
        paths.append(f"{base}/stage2/extra.corpus")
    paths.extend(
        f"{base}/stage2/encoders/f{f}.ckpt" for f in range(config.n_features)
    )
    paths.append(f"{base}/stage3/reconstructor.ckpt")
    paths.append(f"{base}/stage3/calibration.txt")
    return paths


def run_pipeline(
    config: ExperimentConfig, stop_after_stage: int | None = None
) -> RunReport | None:
    """Run every seed and write the report; resumable at stage granularity."""
    started = time.perf_counter()
    run_dir = Path(config.runs_dir) / config.name
    run_dir.mkdir(parents=True, exist_ok=True)

    with RunLock(run_dir):
        manifest = run_dir / "manifest.txt"
        config_hash = stable_config_hash(config.experiment_items())
        if manifest.exists():
            recorded = dict(
                line.split("=", 1) for line in manifest.read_text().splitlines() if line
            ).get("config_hash")
            if recorded != config_hash:
                raise ConfigError(
                    f"run directory {run_dir} was created with a different config"
                )
        else:
            manifest.write_text(f"config_hash={config_hash}\n")
            (run_dir / "config.txt").write_text(dump_config(config))

        per_seed = {}
        for seed in config.seeds:
            auc = run_single_seed(config, run_dir, seed, stop_after_stage)
            if auc is None:
                return None
            per_seed[seed] = auc

        checkpoints = []
        for seed in config.seeds:
            checkpoints.extend(_seed_checkpoints(config, seed))
        report = RunReport(
            name=config.name,
            mode=config.mode,
            ablation=config.ablation,
            per_seed_auc=per_seed,
            config_items=config.experiment_items(),
            checkpoint_paths=tuple(checkpoints),
            wall_clock_seconds=time.perf_counter() - started,
        )
        report.write(run_dir)
        return report


def run_ablation(config: ExperimentConfig, which: str) -> RunReport:
    """Re-run the pipeline with one component removed or replaced."""
    if which not in ("ab1", "ab2"):
        raise ConfigError(f"ablation must be ab1 or ab2, got {which!r}")
    ablated = config.with_overrides(ablation=which, name=f"{config.name}-{which}")
    return run_pipeline(ablated)
