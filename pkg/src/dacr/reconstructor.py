"""Stage 3: dependency-aware reconstruction from frozen embeddings.

For a target (t, f) the model sees the last m+1 timestamps of every
feature's embeddings, with the target cell zero-masked, and predicts the
scalar value at (t, f). Attention across the feature-time grid lets the
model exploit cross-feature structure at the current timestamp, which an
autoregressive forecaster never sees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .datasets.corpus import Corpus
from .encoder import FeatureExtractor, assert_frozen, encode_corpus
from .exceptions import RangeError, ShapeError, StateError, TrainingDivergedError
from .utils import derive_seed, seed_torch, state_checksum, tensor_from_array

DEFAULT_HISTORY = 20
DEFAULT_HEADS = 4
DEFAULT_LAYERS = 2
DEFAULT_FF_DIM = 128
QUERIES_PER_INSTANCE = 8
INFERENCE_CHUNK = 1024


@dataclass(frozen=True)
class InputBlock:
    """F x (m+1) x D embedding grid with the target cell zero-masked."""

    block: torch.Tensor
    t: int
    f: int


def build_input_block(embeddings: torch.Tensor, t: int, f: int, m: int) -> InputBlock:
    """Assemble the model input for target (t, f).

    ``embeddings``: (F, T, D). Row f' != f holds embeddings of timestamps
    [t-m, t]; row f holds [t-m, t-1] followed by a zero vector. ``t`` is
    0-based and must satisfy m <= t < T.
    """
    if embeddings.ndim != 3:
        raise ShapeError(f"embeddings must be (F, T, D), got {tuple(embeddings.shape)}")
    n_features, t_len, _ = embeddings.shape
    if not m <= t < t_len:
        raise RangeError(f"t={t} outside valid range [{m}, {t_len - 1}]")
    if not 0 <= f < n_features:
        raise RangeError(f"f={f} outside valid range [0, {n_features - 1}]")
    block = embeddings[:, t - m : t + 1, :].clone()
    block[f, m, :] = 0.0
    return InputBlock(block=block, t=t, f=f)


def _blocks_for_queries(
    embeddings: torch.Tensor, inst_idx: torch.Tensor, t_idx: torch.Tensor,
    f_idx: torch.Tensor, m: int
) -> torch.Tensor:
    """Vectorized block assembly.

    ``embeddings``: (N, F, T, D); index tensors are 1-d of equal length.
    Returns (Q, F, m+1, D) with each target cell zeroed.
    """
    windows = embeddings.unfold(2, m + 1, 1).permute(0, 1, 2, 4, 3)
    blocks = windows[inst_idx, :, t_idx - m].clone()  # (Q, F, m+1, D)
    blocks[torch.arange(len(f_idx)), f_idx, m] = 0.0
    return blocks


class DependencyReconstructor(nn.Module):
    """Transformer encoder-decoder mapping an input block to one scalar.

    The block is flattened to F*(m+1) tokens with learned time-slot and
    feature-row embeddings; a learned query token selects the target cell.
    """

    def __init__(
        self,
        n_features: int,
        embed_dim: int,
        history: int = DEFAULT_HISTORY,
        heads: int = DEFAULT_HEADS,
        layers: int = DEFAULT_LAYERS,
        ff_dim: int = DEFAULT_FF_DIM,
    ):
        super().__init__()
        self.n_features = n_features
        self.embed_dim = embed_dim
        self.history = history
        self.heads = heads
        self.layers = layers
        d = embed_dim
        self.in_proj = nn.Linear(embed_dim, d)
        self.time_embedding = nn.Parameter(torch.zeros(history + 1, d))
        self.feature_embedding = nn.Parameter(torch.zeros(n_features, d))
        self.query_token = nn.Parameter(torch.zeros(d))
        enc_layer = nn.TransformerEncoderLayer(
            d, heads, dim_feedforward=ff_dim, dropout=0.0, batch_first=True
        )
        dec_layer = nn.TransformerDecoderLayer(
            d, heads, dim_feedforward=ff_dim, dropout=0.0, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(enc_layer, layers)
        self.decoder = nn.TransformerDecoder(dec_layer, layers)
        self.out_head = nn.Linear(d, 1)
        nn.init.normal_(self.time_embedding, std=0.02)
        nn.init.normal_(self.feature_embedding, std=0.02)
        nn.init.normal_(self.query_token, std=0.02)
        self.trained = False
        self.loss_curve: list[float] = []

    def forward(self, blocks: torch.Tensor, target_features: torch.Tensor) -> torch.Tensor:
        """blocks: (B, F, m+1, D); target_features: (B,) -> predictions (B,)."""
        b, n_feat, slots, _ = blocks.shape
        if n_feat != self.n_features or slots != self.history + 1:
            raise ShapeError(
                f"block grid {n_feat}x{slots} does not match model "
                f"{self.n_features}x{self.history + 1}"
            )
        x = self.in_proj(blocks)
        x = x + self.time_embedding.unsqueeze(0).unsqueeze(0)
        x = x + self.feature_embedding.unsqueeze(0).unsqueeze(2)
        x = x.reshape(b, n_feat * slots, self.embed_dim)
        memory = self.encoder(x)
        query = (
            self.query_token
            + self.feature_embedding[target_features]
            + self.time_embedding[-1]
        ).unsqueeze(1)
        decoded = self.decoder(query, memory)
        return self.out_head(decoded).squeeze(-1).squeeze(-1)


def save_reconstructor(model: DependencyReconstructor, path) -> None:
    save_checkpoint(
        path,
        "reconstructor",
        {
            "n_features": model.n_features,
            "embed_dim": model.embed_dim,
            "history": model.history,
            "heads": model.heads,
            "layers": model.layers,
        },
        model.state_dict(),
    )


def load_reconstructor(path) -> DependencyReconstructor:
    hyper, state = load_checkpoint(path, "reconstructor")
    model = DependencyReconstructor(**hyper)
    model.load_state_dict(state)
    model.trained = True
    model.eval()
    return model


def reconstruct(model: DependencyReconstructor, embeddings: torch.Tensor,
                t: int, f: int) -> float:
    """Deterministic scalar reconstruction for one (t, f) query."""
    block = build_input_block(embeddings, t, f, model.history)
    model.eval()
    with torch.no_grad():
        pred = model(block.block.unsqueeze(0), torch.tensor([f]))
    return float(pred[0])


def predict_errors(
    model: DependencyReconstructor,
    extractors: list[FeatureExtractor],
    corpus: Corpus,
    chunk_size: int = INFERENCE_CHUNK,
) -> np.ndarray:
    """Squared reconstruction errors for every valid (instance, t, f).

    Returns (N, T, F) float64 with NaN in the warm-up rows t < m.
    """
    m = model.history
    embeddings = encode_corpus(extractors, corpus)  # (N, F, T, D)
    values = corpus.to_array()
    n, t_len, n_features = values.shape
    if n_features != model.n_features:
        raise ShapeError(
            f"model expects F={model.n_features}, corpus has F={n_features}"
        )
    if t_len <= m:
        raise ShapeError(f"series length {t_len} leaves no scorable timestamps (m={m})")

    t_grid, f_grid = np.meshgrid(np.arange(m, t_len), np.arange(n_features), indexing="ij")
    t_flat = t_grid.ravel()
    f_flat = f_grid.ravel()
    per_inst = len(t_flat)

    errors = np.full((n, t_len, n_features), np.nan)
    inst_all = np.repeat(np.arange(n), per_inst)
    t_all = np.tile(t_flat, n)
    f_all = np.tile(f_flat, n)
    model.eval()
    with torch.no_grad():
        for start in range(0, len(inst_all), chunk_size):
            stop = start + chunk_size
            ii = torch.from_numpy(inst_all[start:stop])
            tt = torch.from_numpy(t_all[start:stop])
            ff = torch.from_numpy(f_all[start:stop])
            blocks = _blocks_for_queries(embeddings, ii, tt, ff, m)
            preds = model(blocks, ff).numpy()
            truth = values[inst_all[start:stop], t_all[start:stop], f_all[start:stop]]
            errors[inst_all[start:stop], t_all[start:stop], f_all[start:stop]] = (
                (preds - truth) ** 2
            )
    return errors


def full_reconstruction_loss(
    model: DependencyReconstructor,
    embeddings: torch.Tensor,
    values: torch.Tensor,
    chunk_size: int = INFERENCE_CHUNK,
) -> float:
    """Mean squared error over every instance, valid timestamp and feature.

    This is the epoch-level objective: the per-query squared errors summed
    and divided by N * F * (T - m).
    """
    m = model.history
    n, _, t_len, _ = embeddings.shape
    n_features = model.n_features
    t_grid, f_grid = np.meshgrid(np.arange(m, t_len), np.arange(n_features), indexing="ij")
    inst_all = np.repeat(np.arange(n), t_grid.size)
    t_all = np.tile(t_grid.ravel(), n)
    f_all = np.tile(f_grid.ravel(), n)
    total = 0.0
    model.eval()
    with torch.no_grad():
        for start in range(0, len(inst_all), chunk_size):
            stop = start + chunk_size
            ii = torch.from_numpy(inst_all[start:stop])
            tt = torch.from_numpy(t_all[start:stop])
            ff = torch.from_numpy(f_all[start:stop])
            blocks = _blocks_for_queries(embeddings, ii, tt, ff, m)
            preds = model(blocks, ff)
            truth = values[ii, tt, ff]
            total += float(torch.sum((preds - truth) ** 2))
    return total / (n * n_features * (t_len - m))


def train_reconstructor(
    train: Corpus,
    extractors: list[FeatureExtractor],
    history: int = DEFAULT_HISTORY,
    iterations: int = 200,
    lr: float = 1e-3,
    batch_size: int = 8,
    queries_per_instance: int = QUERIES_PER_INSTANCE,
    seed: int = 0,
) -> DependencyReconstructor:
    """Fit the reconstruction transformer on normal data.

    Extractors must be frozen; their parameters are checksummed before and
    after the run to guarantee no drift. Targets (t, f) are sampled
    uniformly per batch.
    """
    assert_frozen(extractors)
    checksums = [state_checksum(ext.network) for ext in extractors]

    embeddings = encode_corpus(extractors, train)  # (N, F, T, D)
    values = tensor_from_array(train.to_array())
    n, t_len, n_features = values.shape
    if t_len <= history:
        raise ShapeError(
            f"series length {t_len} must exceed history window m={history}"
        )

    seed_torch(derive_seed(seed, "reconstructor-init"))
    model = DependencyReconstructor(
        n_features=n_features, embed_dim=extractors[0].embed_dim, history=history
    )
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(derive_seed(seed, "reconstructor-batches"))

    for step in range(iterations):
        n_queries = min(batch_size, n) * queries_per_instance
        inst = rng.integers(0, n, size=n_queries)
        t_q = rng.integers(history, t_len, size=n_queries)
        f_q = rng.integers(0, n_features, size=n_queries)
        ii, tt, ff = map(torch.from_numpy, (inst, t_q, f_q))
        blocks = _blocks_for_queries(embeddings, ii, tt, ff, history)
        preds = model(blocks, ff)
        loss = torch.mean((preds - values[ii, tt, ff]) ** 2)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"reconstruction loss diverged at step {step}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        model.loss_curve.append(float(loss.detach()))

    for ext, before in zip(extractors, checksums):
        if state_checksum(ext.network) != before:
            raise StateError(
                f"extractor {ext.feature_index} parameters drifted during training"
            )
    model.trained = True
    model.eval()
    return model
