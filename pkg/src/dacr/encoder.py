"""Stage 2: per-feature contrastive representation learning.

Two fragments are cut from each series so that they overlap; embeddings of
the shared timestamps form positive pairs. The instance-wise loss contrasts
them against other batch rows, the temporal loss against other overlap
timestamps. Raw dot products are used as similarity; the extractor head
L2-normalizes embeddings so the exponentials stay bounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .datasets.corpus import Corpus
from .exceptions import ConfigError, ShapeError, StateError, TrainingDivergedError
from .utils import (
    derive_seed,
    load_checkpoint,
    save_checkpoint,
    seed_torch,
    tensor_from_array,
)

DEFAULT_EMBED_DIM = 64
DEFAULT_ENCODER_LR = 1e-3
CONV_BLOCKS = 5
KERNEL_SIZE = 3
_MAX_SLICE_TRIES = 100_000


@dataclass(frozen=True)
class SlicePair:
    """Index tuple a < c < b < d defining two overlapping fragments.

    Fragment one spans [a, b], fragment two spans [c, d]; they share the
    overlap [c, b]. Indices are 0-based and inclusive.
    """

    a: int
    c: int
    b: int
    d: int

    def __post_init__(self):
        if not 0 <= self.a < self.c < self.b < self.d:
            raise ConfigError(f"slice indices must satisfy a < c < b < d, got {self}")

    @property
    def overlap_length(self) -> int:
        return self.b - self.c + 1

    @property
    def slice1(self) -> slice:
        return slice(self.a, self.b + 1)

    @property
    def slice2(self) -> slice:
        return slice(self.c, self.d + 1)

    @property
    def overlap_in_fragment1(self) -> slice:
        return slice(self.c - self.a, self.b - self.a + 1)

    @property
    def overlap_in_fragment2(self) -> slice:
        return slice(0, self.b - self.c + 1)


def default_min_fragment_length(n_timestamps: int) -> int:
    return max(3, n_timestamps // 4)


def sample_slice_pair(n_timestamps: int, min_len: int, seed: int) -> SlicePair:
    """Uniformly sample a valid overlapping slice pair.

    Both fragments must be at least ``min_len`` long. Rejection sampling
    over sorted 4-subsets keeps the distribution uniform over valid tuples.
    """
    if min_len < 3:
        raise ConfigError(f"min_len must be >= 3, got {min_len}")
    if n_timestamps < min_len + 1:
        raise ConfigError(
            f"series of length {n_timestamps} too short for fragments of {min_len}"
        )
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_SLICE_TRIES):
        a, c, b, d = np.sort(rng.choice(n_timestamps, size=4, replace=False))
        if b - a + 1 >= min_len and d - c + 1 >= min_len:
            return SlicePair(a=int(a), c=int(c), b=int(b), d=int(d))
    raise ConfigError(
        f"no valid slice pair found for T={n_timestamps}, min_len={min_len}"
    )


def _as_tensor(embeddings) -> torch.Tensor:
    t = torch.as_tensor(embeddings)
    if not t.is_floating_point():
        t = t.double()
    return t


def instance_contrastive_loss(z1: torch.Tensor, z2: torch.Tensor, t: int) -> torch.Tensor:
    """Instance-wise InfoNCE at overlap timestamp ``t``, averaged over rows.

    ``z1``/``z2``: (N_B, L, D) embeddings of fragment one / two over the
    overlap. For row i the positive is the co-timestamp embedding of the
    other fragment; negatives are the other rows' embeddings from both
    fragments (the same-fragment self term is excluded).
    """
    z1, z2 = _as_tensor(z1), _as_tensor(z2)
    if z1.shape != z2.shape or z1.ndim != 3:
        raise ShapeError(f"fragment embeddings must share (N,L,D), got {z1.shape} vs {z2.shape}")
    n = z1.shape[0]
    anchor = z1[:, t, :]  # (N, D)
    other = z2[:, t, :]
    cross = anchor @ other.transpose(0, 1)  # (N, N): anchor_i . other_j
    within = anchor @ anchor.transpose(0, 1)  # (N, N): anchor_i . anchor_j
    eye = torch.eye(n, dtype=torch.bool, device=z1.device)
    within = within.masked_fill(eye, float("-inf"))
    denominator = torch.logsumexp(torch.cat([cross, within], dim=1), dim=1)
    numerator = cross.diagonal()
    return (denominator - numerator).mean()


def temporal_contrastive_loss(z1: torch.Tensor, z2: torch.Tensor, t: int) -> torch.Tensor:
    """Temporal InfoNCE for one instance at overlap timestamp ``t``.

    ``z1``/``z2``: (L, D) over the overlap. The positive is the other
    fragment at the same timestamp; negatives are both fragments at other
    overlap timestamps.
    """
    z1, z2 = _as_tensor(z1), _as_tensor(z2)
    if z1.shape != z2.shape or z1.ndim != 2:
        raise ShapeError(f"expected (L, D) embeddings, got {z1.shape} vs {z2.shape}")
    length = z1.shape[0]
    anchor = z1[t]
    cross = z2 @ anchor  # (L,): anchor . z2[t']
    within = z1 @ anchor  # (L,): anchor . z1[t']
    mask = torch.zeros(length, dtype=torch.bool, device=z1.device)
    mask[t] = True
    within = within.masked_fill(mask, float("-inf"))
    denominator = torch.logsumexp(torch.cat([cross, within]), dim=0)
    return denominator - cross[t]


def combined_loss(z1: torch.Tensor, z2: torch.Tensor) -> torch.Tensor:
    """Batch loss: both contrastive terms summed over rows and overlap
    timestamps, normalized by N_B * (overlap_length - 1).

    Vectorized but numerically identical to summing the per-(i, t) ops.
    """
    z1, z2 = _as_tensor(z1), _as_tensor(z2)
    if z1.shape != z2.shape or z1.ndim != 3:
        raise ShapeError(f"fragment embeddings must share (N,L,D), got {z1.shape} vs {z2.shape}")
    n, length = z1.shape[0], z1.shape[1]
    if length < 2:
        raise ConfigError("combined loss needs an overlap of at least 2 timestamps")

    eye_n = torch.eye(n, dtype=torch.bool, device=z1.device)
    eye_l = torch.eye(length, dtype=torch.bool, device=z1.device)

    # instance-wise term: (L, N, N) similarity grids per timestamp
    cross_in = torch.einsum("ild,jld->lij", z1, z2)
    within_in = torch.einsum("ild,jld->lij", z1, z1)
    within_in = within_in.masked_fill(eye_n.unsqueeze(0), float("-inf"))
    denom_in = torch.logsumexp(torch.cat([cross_in, within_in], dim=2), dim=2)
    num_in = cross_in.diagonal(dim1=1, dim2=2)  # (L, N)
    loss_in = denom_in - num_in

    # temporal term: (N, L, L) similarity grids per row
    cross_te = torch.einsum("ild,imd->ilm", z1, z2)
    within_te = torch.einsum("ild,imd->ilm", z1, z1)
    within_te = within_te.masked_fill(eye_l.unsqueeze(0), float("-inf"))
    denom_te = torch.logsumexp(torch.cat([cross_te, within_te], dim=2), dim=2)
    num_te = cross_te.diagonal(dim1=1, dim2=2)  # (N, L)
    loss_te = denom_te - num_te

    total = loss_in.sum() + loss_te.sum()
    return total / (n * (length - 1))


class DilatedConvNet(nn.Module):
    """Causal dilated convolution stack over one univariate series.

    Output is timestamp-aligned with the input and L2-normalized per
    timestep, so dot products between embeddings stay in [-1, 1].
    """

    def __init__(self, embed_dim: int = DEFAULT_EMBED_DIM, hidden_dim: int = 64,
                 blocks: int = CONV_BLOCKS, kernel_size: int = KERNEL_SIZE):
        super().__init__()
        self.embed_dim = embed_dim
        self.input_proj = nn.Conv1d(1, hidden_dim, kernel_size=1)
        self.blocks = nn.ModuleList(
            nn.Conv1d(hidden_dim, hidden_dim, kernel_size, dilation=2**b)
            for b in range(blocks)
        )
        self.head = nn.Conv1d(hidden_dim, embed_dim, kernel_size=1)

    def forward(self, series: torch.Tensor) -> torch.Tensor:
        """series: (B, L) -> embeddings (B, L, embed_dim)."""
        h = self.input_proj(series.unsqueeze(1))
        for block in self.blocks:
            pad = block.dilation[0] * (block.kernel_size[0] - 1)
            h = h + torch.relu(block(F.pad(h, (pad, 0))))
        z = self.head(h).transpose(1, 2)
        return F.normalize(z, dim=-1, eps=1e-8)


class FeatureExtractor:
    """Trained embedding network bound to one feature column."""

    def __init__(self, feature_index: int, network: DilatedConvNet):
        self.feature_index = feature_index
        self.network = network
        self._frozen = False

    @property
    def embed_dim(self) -> int:
        return self.network.embed_dim

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> None:
        self.network.eval()
        for p in self.network.parameters():
            p.requires_grad_(False)
        self._frozen = True

    def embed_series(self, series) -> torch.Tensor:
        """Univariate series (L,) -> timestamp-aligned embeddings (L, D)."""
        u = torch.as_tensor(np.asarray(series, dtype=np.float32))
        if u.ndim != 1:
            raise ShapeError(f"expected a 1-d series, got shape {tuple(u.shape)}")
        with torch.no_grad():
            return self.network(u.unsqueeze(0))[0]

    def embed_instance(self, values) -> torch.Tensor:
        """Full T x F instance -> embeddings of this extractor's column."""
        arr = np.asarray(values, dtype=np.float32)
        if arr.ndim != 2:
            raise ShapeError(f"expected a T x F matrix, got shape {arr.shape}")
        if self.feature_index >= arr.shape[1]:
            raise ShapeError(
                f"extractor is bound to feature {self.feature_index}, "
                f"instance has only F={arr.shape[1]}"
            )
        return self.embed_series(arr[:, self.feature_index])


def save_extractor(extractor: FeatureExtractor, path) -> None:
    net = extractor.network
    save_checkpoint(
        path,
        "feature-extractor",
        {
            "feature_index": extractor.feature_index,
            "embed_dim": net.embed_dim,
            "hidden_dim": net.input_proj.out_channels,
            "blocks": len(net.blocks),
            "kernel_size": net.blocks[0].kernel_size[0],
        },
        net.state_dict(),
    )


def load_extractor(path) -> FeatureExtractor:
    hyper, state = load_checkpoint(path, "feature-extractor")
    feature_index = hyper.pop("feature_index")
    net = DilatedConvNet(**hyper)
    net.load_state_dict(state)
    extractor = FeatureExtractor(feature_index=feature_index, network=net)
    extractor.freeze()
    return extractor


def encode_corpus(extractors: list[FeatureExtractor], corpus: Corpus) -> torch.Tensor:
    """Embed every instance with every extractor -> (N, F, T, D)."""
    values = tensor_from_array(corpus.to_array())  # (N, T, F)
    outputs = []
    with torch.no_grad():
        for ext in extractors:
            outputs.append(ext.network(values[:, :, ext.feature_index]))
    return torch.stack(outputs, dim=1)


def _union_values(train: Corpus, extra: Corpus | None) -> np.ndarray:
    values = train.to_array()
    if extra is not None:
        if extra.n_features != train.n_features:
            raise ShapeError("train and extra corpora disagree on feature count")
        extra_values = extra.to_array()
        if extra_values.shape[1] != values.shape[1]:
            raise ShapeError("train and extra corpora disagree on sequence length")
        values = np.concatenate([values, extra_values], axis=0)
    return values


def train_extractors(
    train: Corpus,
    extra: Corpus | None,
    iterations: int = 200,
    lr: float = DEFAULT_ENCODER_LR,
    batch_size: int = 8,
    embed_dim: int = DEFAULT_EMBED_DIM,
    min_fragment_length: int | None = None,
    seed: int = 0,
) -> list[FeatureExtractor]:
    """Train one frozen extractor per feature on the union of train + extra.

    One slice tuple is sampled per batch and shared by every row, keeping
    the co-timestamp positives aligned across the batch. Each extractor's
    randomness is derived from its own feature index, so per-feature
    training is reproducible regardless of ordering.
    """
    values = _union_values(train, extra)
    n_union, t_len, n_features = values.shape
    min_len = min_fragment_length or default_min_fragment_length(t_len)
    tensor = torch.from_numpy(values)

    extractors = []
    for f in range(n_features):
        feature_seed = derive_seed(seed, "extractor", f)
        seed_torch(feature_seed)
        net = DilatedConvNet(embed_dim=embed_dim)
        optimizer = torch.optim.Adam(net.parameters(), lr=lr)
        rng = np.random.default_rng(derive_seed(feature_seed, "batches"))
        for step in range(iterations):
            idx = rng.integers(0, n_union, size=min(batch_size, n_union))
            pair = sample_slice_pair(t_len, min_len, seed=int(rng.integers(0, 2**31)))
            batch = tensor[torch.from_numpy(idx)][:, :, f]
            z1 = net(batch[:, pair.slice1])[:, pair.overlap_in_fragment1]
            z2 = net(batch[:, pair.slice2])[:, pair.overlap_in_fragment2]
            loss = combined_loss(z1, z2)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"contrastive loss diverged for feature {f} at step {step}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        extractor = FeatureExtractor(feature_index=f, network=net)
        extractor.freeze()
        extractors.append(extractor)
    return extractors


def train_reconstruction_extractors(
    train: Corpus,
    iterations: int = 200,
    lr: float = DEFAULT_ENCODER_LR,
    batch_size: int = 8,
    embed_dim: int = DEFAULT_EMBED_DIM,
    seed: int = 0,
) -> list[FeatureExtractor]:
    """Ablation stand-in: same architecture trained by plain autoencoding.

    A linear readout must recover the input value from each timestamp's
    embedding; no contrastive loss and no synthetic extra data.
    """
    values = train.to_array()
    n_train, _, n_features = values.shape
    tensor = torch.from_numpy(values)

    extractors = []
    for f in range(n_features):
        feature_seed = derive_seed(seed, "ae-extractor", f)
        seed_torch(feature_seed)
        net = DilatedConvNet(embed_dim=embed_dim)
        readout = nn.Linear(embed_dim, 1)
        params = list(net.parameters()) + list(readout.parameters())
        optimizer = torch.optim.Adam(params, lr=lr)
        rng = np.random.default_rng(derive_seed(feature_seed, "batches"))
        for step in range(iterations):
            idx = rng.integers(0, n_train, size=min(batch_size, n_train))
            batch = tensor[torch.from_numpy(idx)][:, :, f]
            recon = readout(net(batch)).squeeze(-1)
            loss = torch.mean((recon - batch) ** 2)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"autoencoding loss diverged for feature {f} at step {step}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        extractor = FeatureExtractor(feature_index=f, network=net)
        extractor.freeze()
        extractors.append(extractor)
    return extractors


def assert_frozen(extractors: list[FeatureExtractor]) -> None:
    for ext in extractors:
        if not ext.frozen:
            raise StateError(f"extractor {ext.feature_index} is not frozen")
