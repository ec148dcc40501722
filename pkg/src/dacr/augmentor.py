"""Stage 1: sequence VAE training and latent-noise distribution augmentation.

A recurrent VAE learns to reconstruct normal instances. Extra data from a
deliberately different distribution is then synthesized by scaling and
shifting the latent code with Gaussian noise before decoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .datasets.corpus import Corpus, TimeSeriesInstance
from .exceptions import ConfigError, StateError, TrainingDivergedError
from .utils import (
    derive_seed,
    load_checkpoint,
    save_checkpoint,
    seed_torch,
    tensor_from_array,
)

DEFAULT_VAE_LR = 1e-4
DEFAULT_LATENT_DIM = 16
DEFAULT_HIDDEN_DIM = 64


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian scale/shift noise applied to latent codes.

    The scale factor is drawn around 1, the shift around 0; the variances
    control how far the synthesized data departs from the normal
    distribution.
    """

    alpha_mean: float = 1.0
    alpha_var: float = 0.1
    beta_mean: float = 0.0
    beta_var: float = 0.1

    def __post_init__(self):
        if self.alpha_var < 0 or self.beta_var < 0:
            raise ConfigError("noise variances must be non-negative")


class SequenceVae(nn.Module):
    """Recurrent VAE: 2 LSTM layers encode, 2 decode, Gaussian latent."""

    def __init__(self, n_features: int, latent_dim: int = DEFAULT_LATENT_DIM,
                 hidden_dim: int = DEFAULT_HIDDEN_DIM):
        super().__init__()
        self.n_features = n_features
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.recurrent_layers = 4  # 2 encoder + 2 decoder
        self.encoder_lstm = nn.LSTM(n_features, hidden_dim, num_layers=2, batch_first=True)
        self.fc_mean = nn.Linear(hidden_dim, latent_dim)
        self.fc_logvar = nn.Linear(hidden_dim, latent_dim)
        self.decoder_lstm = nn.LSTM(latent_dim, hidden_dim, num_layers=2, batch_first=True)
        self.fc_out = nn.Linear(hidden_dim, n_features)
        self.trained = False
        self.loss_curve: list[float] = []

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """x: (B, T, F) -> latent mean and log-variance, each (B, latent)."""
        hidden, _ = self.encoder_lstm(x)
        last = hidden[:, -1, :]
        return self.fc_mean(last), self.fc_logvar(last)

    def decode(self, z: torch.Tensor, length: int) -> torch.Tensor:
        """z: (B, latent) -> reconstruction (B, length, F)."""
        tiled = z.unsqueeze(1).expand(-1, length, -1)
        hidden, _ = self.decoder_lstm(tiled)
        return self.fc_out(hidden)

    def forward(self, x: torch.Tensor):
        mean, logvar = self.encode(x)
        std = torch.exp(0.5 * logvar)
        z = mean + std * torch.randn_like(std)
        recon = self.decode(z, x.shape[1])
        return recon, mean, logvar

    @torch.no_grad()
    def reconstruct(self, x: torch.Tensor) -> torch.Tensor:
        """Deterministic reconstruction through the posterior mean."""
        mean, _ = self.encode(x)
        return self.decode(mean, x.shape[1])


def vae_loss(recon, x, mean, logvar) -> tuple[torch.Tensor, torch.Tensor]:
    """Reconstruction MSE plus a unit-Gaussian latent regularizer.

    Both terms are per-element means so their balance is independent of
    sequence length and latent width.
    """
    recon_mse = torch.mean((recon - x) ** 2)
    kl = -0.5 * torch.mean(1.0 + logvar - mean.pow(2) - logvar.exp())
    return recon_mse + kl, recon_mse


def train_vae(
    train: Corpus,
    iterations: int = 200,
    lr: float = DEFAULT_VAE_LR,
    batch_size: int = 8,
    latent_dim: int = DEFAULT_LATENT_DIM,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    seed: int = 0,
) -> SequenceVae:
    """Train the VAE on (already normalized) normal data.

    Returns the model with its reconstruction-MSE curve on ``loss_curve``.
    Raises TrainingDivergedError on a non-finite loss, keeping the last
    finite parameter snapshot on the exception.
    """
    seed_torch(derive_seed(seed, "vae-init"))
    model = SequenceVae(train.n_features, latent_dim=latent_dim, hidden_dim=hidden_dim)
    values = tensor_from_array(train.to_array())
    rng = np.random.default_rng(derive_seed(seed, "vae-batches"))
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)

    last_finite = {k: v.detach().clone() for k, v in model.state_dict().items()}
    for _ in range(iterations):
        idx = rng.integers(0, len(train), size=min(batch_size, len(train)))
        batch = values[torch.from_numpy(idx)]
        optimizer.zero_grad()
        recon, mean, logvar = model(batch)
        loss, recon_mse = vae_loss(recon, batch, mean, logvar)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(
                "VAE loss became non-finite", checkpoint=last_finite
            )
        loss.backward()
        optimizer.step()
        model.loss_curve.append(float(recon_mse.detach()))
        last_finite = {k: v.detach().clone() for k, v in model.state_dict().items()}
    model.trained = True
    model.eval()
    return model


def save_vae(model: SequenceVae, path) -> None:
    save_checkpoint(
        path,
        "vae",
        {
            "n_features": model.n_features,
            "latent_dim": model.latent_dim,
            "hidden_dim": model.hidden_dim,
        },
        model.state_dict(),
    )


def load_vae(path) -> SequenceVae:
    hyper, state = load_checkpoint(path, "vae")
    model = SequenceVae(**hyper)
    model.load_state_dict(state)
    model.trained = True
    model.eval()
    return model


def inject_noise(latent: np.ndarray, spec: NoiseSpec, seed: int) -> np.ndarray:
    """Scale-and-shift a latent vector with freshly sampled Gaussian noise.

    One scale vector and one shift vector are drawn per call; the same seed
    reproduces them exactly.
    """
    latent = np.asarray(latent, dtype=np.float64)
    if not np.isfinite(latent).all():
        raise ConfigError("latent vector must be finite")
    rng = np.random.default_rng(seed)
    alpha = rng.normal(spec.alpha_mean, np.sqrt(spec.alpha_var), size=latent.shape)
    beta = rng.normal(spec.beta_mean, np.sqrt(spec.beta_var), size=latent.shape)
    return alpha * latent + beta


def generate_extra(
    model: SequenceVae,
    train: Corpus,
    spec: NoiseSpec,
    count: int,
    seed: int,
) -> Corpus:
    """Decode noise-perturbed latent codes of training instances.

    Source instances are drawn uniformly with replacement; each synthetic
    instance gets its own noise draw. The result is tagged origin="extra".
    """
    if not model.trained:
        raise StateError("generate_extra requires a trained VAE")
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(derive_seed(seed, "extra"))
    source_idx = rng.integers(0, len(train), size=count)
    values = tensor_from_array(train.to_array())
    length = values.shape[1]

    model.eval()
    with torch.no_grad():
        means, _ = model.encode(values)
    means = means.numpy().astype(np.float64)

    noisy = np.stack(
        [
            inject_noise(means[i], spec, seed=int(rng.integers(0, 2**31)))
            for i in source_idx
        ]
    )
    with torch.no_grad():
        decoded = model.decode(torch.from_numpy(noisy.astype(np.float32)), length)
    decoded = decoded.numpy()

    instances = tuple(
        TimeSeriesInstance(
            values=decoded[j],
            id=f"extra{j:05d}-from-{train.instances[int(source_idx[j])].id}",
        )
        for j in range(count)
    )
    return Corpus(instances, feature_stats=train.feature_stats, origin="extra")
