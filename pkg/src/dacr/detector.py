"""Estimator facade: the full three-stage detector behind fit/predict.

Follows the scikit-learn estimator contract (constructor stores
hyperparameters verbatim, fitted state carries trailing underscores,
``get_params``/``set_params``/``clone`` work), so the detector composes
with pipelines and model selection tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .augmentor import NoiseSpec, generate_extra, train_vae
from .datasets.corpus import Corpus, compute_feature_stats, corpus_from_array, normalize
from .encoder import train_extractors, train_reconstruction_extractors
from .reconstructor import train_reconstructor
from .scorer import calibrate, instance_score, score_corpus
from .utils import derive_seed
from .validation import check_series_array


class DACRDetector(BaseEstimator):
    """Three-stage anomaly detector for multivariate time series.

    ``fit`` consumes normal instances shaped (N, T, F): a sequence VAE
    synthesizes distribution-augmented extra data, per-feature extractors
    are trained contrastively on the union, and a transformer reconstructs
    values from the frozen embeddings. Scores are the calibrated percent
    excess of reconstruction error; anything above zero is anomalous.

    Parameters
    ----------
    history : int
        How many past timestamps the reconstructor may observe (m).
    augmentation : bool
        Disable to skip the VAE extra-data stage (first ablation).
    contrastive : bool
        Disable to train extractors by plain autoencoding instead of the
        contrastive objective (second ablation).
    """

    def __init__(
        self,
        history: int = 20,
        latent_dim: int = 16,
        embed_dim: int = 64,
        batch_size: int = 8,
        vae_lr: float = 1e-4,
        encoder_lr: float = 1e-3,
        reconstructor_lr: float = 1e-3,
        vae_iterations: int = 200,
        encoder_iterations: int = 200,
        reconstructor_iterations: int = 200,
        alpha_var: float = 0.1,
        beta_var: float = 0.1,
        extra_ratio: float = 1.0,
        augmentation: bool = True,
        contrastive: bool = True,
        random_state: int = 0,
    ):
        self.history = history
        self.latent_dim = latent_dim
        self.embed_dim = embed_dim
        self.batch_size = batch_size
        self.vae_lr = vae_lr
        self.encoder_lr = encoder_lr
        self.reconstructor_lr = reconstructor_lr
        self.vae_iterations = vae_iterations
        self.encoder_iterations = encoder_iterations
        self.reconstructor_iterations = reconstructor_iterations
        self.alpha_var = alpha_var
        self.beta_var = beta_var
        self.extra_ratio = extra_ratio
        self.augmentation = augmentation
        self.contrastive = contrastive
        self.random_state = random_state

    def fit(self, X, y=None):
        """Fit the three stages on normal data; labels are never consumed."""
        X = check_series_array(X)
        raw = corpus_from_array(X, origin="fit")
        self.feature_stats_ = compute_feature_stats(raw)
        train = normalize(raw, self.feature_stats_)
        seed = self.random_state

        extra = None
        if self.augmentation and self.contrastive:
            self.vae_ = train_vae(
                train,
                iterations=self.vae_iterations,
                lr=self.vae_lr,
                batch_size=self.batch_size,
                latent_dim=self.latent_dim,
                seed=derive_seed(seed, "stage1"),
            )
            extra = generate_extra(
                self.vae_,
                train,
                NoiseSpec(alpha_var=self.alpha_var, beta_var=self.beta_var),
                count=max(1, int(round(self.extra_ratio * len(train)))),
                seed=derive_seed(seed, "stage2a"),
            )
        else:
            self.vae_ = None

        if self.contrastive:
            self.extractors_ = train_extractors(
                train,
                extra,
                iterations=self.encoder_iterations,
                lr=self.encoder_lr,
                batch_size=self.batch_size,
                embed_dim=self.embed_dim,
                seed=derive_seed(seed, "stage2b"),
            )
        else:
            self.extractors_ = train_reconstruction_extractors(
                train,
                iterations=self.encoder_iterations,
                lr=self.encoder_lr,
                batch_size=self.batch_size,
                embed_dim=self.embed_dim,
                seed=derive_seed(seed, "stage2b"),
            )

        self.reconstructor_ = train_reconstructor(
            train,
            self.extractors_,
            history=self.history,
            iterations=self.reconstructor_iterations,
            lr=self.reconstructor_lr,
            batch_size=self.batch_size,
            seed=derive_seed(seed, "stage3"),
        )
        self.calibration_ = calibrate(self.reconstructor_, self.extractors_, train)
        return self

    def _check_fitted(self):
        if not hasattr(self, "calibration_"):
            raise NotFittedError("call fit before scoring")

    def _score_series_list(self, X):
        self._check_fitted()
        X = check_series_array(X)
        corpus = normalize(corpus_from_array(X, origin="score"), self.feature_stats_)
        return score_corpus(self.reconstructor_, self.extractors_, self.calibration_, corpus)

    def score_series(self, X) -> np.ndarray:
        """Per-timestamp scores, shape (N, T); warm-up stamps score -100."""
        return np.stack([s.scores for s in self._score_series_list(X)])

    def score_samples(self, X) -> np.ndarray:
        """Per-instance scores: the worst timestamp of each instance."""
        return np.array([instance_score(s) for s in self._score_series_list(X)])

    def predict(self, X) -> np.ndarray:
        """1 where an instance contains any strictly positive timestamp."""
        return (self.score_samples(X) > 0.0).astype(int)

    def predict_timestamps(self, X) -> np.ndarray:
        """Boolean (N, T) anomaly labels under the strict > 0 rule."""
        return self.score_series(X) > 0.0
