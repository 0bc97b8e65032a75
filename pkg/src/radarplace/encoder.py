"""Convolutional spatial encoder and its triplet-margin training loop.

The network is small enough to run on plain numpy: stacked 3x3 convolutions
with rectifier activations, non-overlapping max pools after the first three
layers, and an L2-normalized flatten as the descriptor head.  Forward and
backward passes are hand-written so the gradient can be checked against
central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionError, EmptyResultError
from .heatmap import Heatmap

_DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class EncoderArch:
    """Layer plan: channel widths, pooling plan and expected input size."""

    input_shape: tuple[int, int] = (64, 768)
    channels: tuple[int, ...] = (1, 8, 16, 32, 32)
    pools: tuple[tuple[int, int] | None, ...] = ((4, 2), (4, 2), (4, 2), None)

    def __post_init__(self):
        if len(self.pools) != self.n_layers:
            raise ConfigError("one pool entry (or None) required per conv layer")
        h, w = self.input_shape
        for pool in self.pools:
            if pool is None:
                continue
            ph, pw = pool
            if h % ph or w % pw:
                raise ConfigError(
                    f"pool {pool} does not divide feature map {h}x{w}"
                )
            h, w = h // ph, w // pw

    @property
    def n_layers(self) -> int:
        return len(self.channels) - 1

    @property
    def descriptor_dim(self) -> int:
        h, w = self.input_shape
        for pool in self.pools:
            if pool is not None:
                h, w = h // pool[0], w // pool[1]
        return self.channels[-1] * h * w


@dataclass
class EncoderWeights:
    """Per-layer 3x3 kernels and biases plus the architecture they fit."""

    arch: EncoderArch
    kernels: list[np.ndarray]  # (out_ch, in_ch, 3, 3) each
    biases: list[np.ndarray]   # (out_ch,) each
    seed: int = 0

    def copy(self) -> "EncoderWeights":
        return EncoderWeights(
            self.arch,
            [k.copy() for k in self.kernels],
            [b.copy() for b in self.biases],
            self.seed,
        )

    def checksum(self) -> int:
        import zlib

        crc = 0
        for k, b in zip(self.kernels, self.biases):
            crc = zlib.crc32(k.tobytes(), crc)
            crc = zlib.crc32(b.tobytes(), crc)
        return crc


def init_weights(arch: EncoderArch, seed: int = 0) -> EncoderWeights:
    """Uniform init in +-fan_in**-0.5, reproducible from the seed."""
    rng = np.random.default_rng(seed)
    kernels, biases = [], []
    for l in range(arch.n_layers):
        c_in, c_out = arch.channels[l], arch.channels[l + 1]
        bound = 1.0 / math.sqrt(c_in * 9)
        kernels.append(rng.uniform(-bound, bound, size=(c_out, c_in, 3, 3)))
        biases.append(rng.uniform(-bound, bound, size=c_out))
    return EncoderWeights(arch, kernels, biases, seed)


@dataclass
class Descriptor:
    """Unit-norm place descriptor."""

    values: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.values.size


def _as_array(x) -> np.ndarray:
    if isinstance(x, Heatmap):
        return x.values
    return np.asarray(x, dtype=np.float64)


def _as_desc(x) -> np.ndarray:
    if isinstance(x, Descriptor):
        return x.values
    return np.asarray(x, dtype=np.float64)


def _im2col(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (C*9, H*W) patch matrix for a padded 3x3 convolution."""
    c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, 9, h * w))
    for di in range(3):
        for dj in range(3):
            cols[:, di * 3 + dj, :] = padded[:, di : di + h, dj : dj + w].reshape(c, -1)
    return cols.reshape(c * 9, h * w)


def _col2im(dcols: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back to the input."""
    c, h, w = shape
    dpadded = np.zeros((c, h + 2, w + 2))
    dcols = dcols.reshape(c, 9, h, w)
    for di in range(3):
        for dj in range(3):
            dpadded[:, di : di + h, dj : dj + w] += dcols[:, di * 3 + dj]
    return dpadded[:, 1:-1, 1:-1]


def _forward(x: np.ndarray, w: EncoderWeights):
    """Run the conv stack; returns (flat pre-norm descriptor, cache)."""
    arch = w.arch
    cache = []
    cur = x[None] if x.ndim == 2 else x
    for l in range(arch.n_layers):
        cols = _im2col(cur)
        k2d = w.kernels[l].reshape(arch.channels[l + 1], -1)
        pre = (k2d @ cols + w.biases[l][:, None]).reshape(
            arch.channels[l + 1], cur.shape[1], cur.shape[2]
        )
        act = np.maximum(pre, 0.0)
        entry = {"in_shape": cur.shape, "cols": cols, "mask": pre > 0}
        cur = act
        pool = arch.pools[l]
        if pool is not None:
            ph, pw = pool
            c, h, wid = cur.shape
            ho, wo = h // ph, wid // pw
            windows = cur.reshape(c, ho, ph, wo, pw).transpose(0, 1, 3, 2, 4)
            flat = windows.reshape(c, ho, wo, ph * pw)
            idx = flat.argmax(axis=3)
            cur = np.take_along_axis(flat, idx[..., None], axis=3)[..., 0]
            entry["pool_idx"] = idx
            entry["pool_in_shape"] = (c, h, wid)
        cache.append(entry)
    return cur.ravel(), cache


def _backward(dflat: np.ndarray, cache, w: EncoderWeights, grads):
    """Backprop a descriptor gradient through the stack; accumulates grads."""
    arch = w.arch
    dcur = dflat
    for l in reversed(range(arch.n_layers)):
        entry = cache[l]
        pool = arch.pools[l]
        if pool is not None:
            ph, pw = pool
            c, h, wid = entry["pool_in_shape"]
            ho, wo = h // ph, wid // pw
            dflat4 = np.zeros((c, ho, wo, ph * pw))
            np.put_along_axis(
                dflat4, entry["pool_idx"][..., None], dcur.reshape(c, ho, wo, 1), axis=3
            )
            dcur = dflat4.reshape(c, ho, wo, ph, pw).transpose(0, 1, 3, 2, 4).reshape(c, h, wid)
        else:
            c_in, h, wid = entry["in_shape"]
            dcur = dcur.reshape(arch.channels[l + 1], h, wid)
        dpre = dcur.reshape(arch.channels[l + 1], -1) * entry["mask"].reshape(
            arch.channels[l + 1], -1
        )
        grads[l][0] += (dpre @ entry["cols"].T).reshape(w.kernels[l].shape)
        grads[l][1] += dpre.sum(axis=1)
        k2d = w.kernels[l].reshape(arch.channels[l + 1], -1)
        dcols = k2d.T @ dpre
        dcur = _col2im(dcols, entry["in_shape"])
    return dcur


def _normalize_input(x: np.ndarray) -> np.ndarray:
    """Zero-mean / unit-variance standardization of the raw heatmap."""
    mu, sd = x.mean(), x.std()
    return (x - mu) / sd if sd > 0 else x - mu


def encode(h, w: EncoderWeights) -> Descriptor:
    """Map a heatmap to its unit-norm place descriptor."""
    x = _as_array(h)
    if x.shape != w.arch.input_shape:
        raise DimensionError(
            f"input {x.shape} does not match encoder input {w.arch.input_shape}"
        )
    flat, _ = _forward(_normalize_input(x), w)
    norm = np.linalg.norm(flat)
    if norm < _DEGENERATE_EPS:
        canonical = np.zeros(flat.size)
        canonical[0] = 1.0
        return Descriptor(canonical, degenerate=True)
    return Descriptor(flat / norm)


def triplet_loss(dq, dps, dns, alpha: float) -> float:
    """Hinge triplet margin loss with the closest positive.

    sum_j max(min_i ||q - p_i|| - ||q - n_j|| + alpha, 0)
    """
    if alpha < 0:
        raise ConfigError("alpha must be >= 0")
    q = _as_desc(dq)
    ps = [_as_desc(p) for p in dps]
    ns = [_as_desc(n) for n in dns]
    if not ps or not ns:
        raise ConfigError("positives and negatives must be nonempty")
    d_pos = min(np.linalg.norm(q - p) for p in ps)
    total = 0.0
    for n in ns:
        total += max(d_pos - np.linalg.norm(q - n) + alpha, 0.0)
    return float(total)


def _loss_and_descriptor_grads(q, ps, ns, alpha):
    """Loss value and gradients w.r.t. each descriptor.

    Subgradient conventions: zero at hinge kinks, first index on positive
    ties, zero for coincident (zero-distance) pairs.
    """
    d_ps = [np.linalg.norm(q - p) for p in ps]
    i_star = int(np.argmin(d_ps))
    d_pos = d_ps[i_star]
    p_star = ps[i_star]

    gq = np.zeros_like(q)
    gps = [np.zeros_like(p) for p in ps]
    gns = [np.zeros_like(n) for n in ns]
    loss = 0.0
    if d_pos > 0:
        u_pos = (q - p_star) / d_pos
    else:
        u_pos = np.zeros_like(q)
    for j, n in enumerate(ns):
        d_n = np.linalg.norm(q - n)
        margin = d_pos - d_n + alpha
        if margin <= 0:
            continue
        loss += margin
        u_neg = (q - n) / d_n if d_n > 0 else np.zeros_like(q)
        gq += u_pos - u_neg
        gps[i_star] -= u_pos
        gns[j] += u_neg
    return loss, gq, gps, gns


def _norm_backward(flat: np.ndarray, dnorm: np.ndarray) -> np.ndarray:
    """Gradient through y = x / ||x||."""
    norm = np.linalg.norm(flat)
    if norm < _DEGENERATE_EPS:
        return np.zeros_like(flat)
    y = flat / norm
    return (dnorm - y * np.dot(y, dnorm)) / norm


@dataclass
class TripletBatch:
    """One mined triplet: a query with its positives and negatives.

    Samples are referenced by dataset index; ``bind`` resolves them to
    heatmap arrays before gradient evaluation.
    """

    query_idx: int
    positive_idxs: list[int]
    negative_idxs: list[int]
    margin: float = 0.5
    query: np.ndarray | None = None
    positives: list[np.ndarray] | None = None
    negatives: list[np.ndarray] | None = None

    def bind(self, heatmaps) -> "TripletBatch":
        return replace(
            self,
            query=_as_array(heatmaps[self.query_idx]),
            positives=[_as_array(heatmaps[i]) for i in self.positive_idxs],
            negatives=[_as_array(heatmaps[i]) for i in self.negative_idxs],
        )


def backward(batch: TripletBatch, w: EncoderWeights):
    """Exact loss gradients for one triplet through the encoder.

    Returns (grads, loss) where grads mirrors the weight structure as a
    list of [dkernel, dbias] pairs.
    """
    if batch.query is None or batch.positives is None or batch.negatives is None:
        raise ConfigError("triplet must be bound to heatmaps before backward")
    grads = [
        [np.zeros_like(k), np.zeros_like(b)]
        for k, b in zip(w.kernels, w.biases)
    ]
    samples = [batch.query] + list(batch.positives) + list(batch.negatives)
    flats, caches, descs = [], [], []
    for x in samples:
        flat, cache = _forward(_normalize_input(_as_array(x)), w)
        norm = np.linalg.norm(flat)
        if norm < _DEGENERATE_EPS:
            desc = np.zeros(flat.size)
            desc[0] = 1.0
        else:
            desc = flat / norm
        flats.append(flat)
        caches.append(cache)
        descs.append(desc)

    n_pos = len(batch.positives)
    q = descs[0]
    ps = descs[1 : 1 + n_pos]
    ns = descs[1 + n_pos :]
    loss, gq, gps, gns = _loss_and_descriptor_grads(q, ps, ns, batch.margin)
    dgrads = [gq] + gps + gns
    for flat, cache, dnorm in zip(flats, caches, dgrads):
        if not np.any(dnorm):
            continue
        dflat = _norm_backward(flat, dnorm)
        _backward(dflat, cache, w, grads)
    return grads, loss


def mine_triplets(
    records,
    r_pos: float = 3.0,
    r_neg: float = 18.0,
    n_pos: int = 1,
    n_neg: int = 10,
    seed: int = 0,
    margin: float = 0.5,
) -> tuple[list[TripletBatch], int]:
    """Sample one triplet per eligible query by the distance rule.

    ``records`` is any sequence of objects with a 2-D ``position`` (or
    (heatmap, position) pairs).  Queries lacking enough positives within
    r_pos or negatives beyond r_neg are skipped; the skip count is
    returned alongside the batches.
    """
    if r_pos >= r_neg:
        raise ConfigError("r_pos must be < r_neg")
    positions = np.array([_position_of(r) for r in records], dtype=np.float64)
    n = len(positions)
    rng = np.random.default_rng(seed)
    batches: list[TripletBatch] = []
    skipped = 0
    if n == 0:
        return batches, skipped
    dists = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    for qi in range(n):
        pos_cand = np.flatnonzero((dists[qi] <= r_pos) & (np.arange(n) != qi))
        neg_cand = np.flatnonzero(dists[qi] >= r_neg)
        if pos_cand.size < n_pos or neg_cand.size < n_neg:
            skipped += 1
            continue
        ps = rng.choice(pos_cand, size=n_pos, replace=False)
        nss = rng.choice(neg_cand, size=n_neg, replace=False)
        batches.append(
            TripletBatch(qi, sorted(int(i) for i in ps), sorted(int(i) for i in nss), margin)
        )
    return batches, skipped


def _position_of(record):
    if hasattr(record, "position"):
        return np.asarray(record.position, dtype=np.float64)
    return np.asarray(record[1], dtype=np.float64)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer hyperparameters for the reproduction preset."""

    batch_size: int = 16
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.001
    lr_decay: float = 0.5
    lr_decay_every: int = 5
    max_epochs: int = 50
    margin: float = 0.5
    r_pos: float = 3.0
    r_neg: float = 18.0
    n_pos: int = 1
    n_neg: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "lr", "momentum", "weight_decay", "lr_decay",
                     "lr_decay_every", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a zero-based epoch index."""
        return self.lr * self.lr_decay ** (epoch // self.lr_decay_every)


@dataclass
class TrainResult:
    weights: EncoderWeights
    history: list[dict]  # per epoch: epoch, mean_loss, lr, val_recall1


def _val_recall1(dataset, weights, holdout_stride=5, radius=3.0):
    """Leave-out recall@1: every holdout_stride-th record queries the rest."""
    descs = np.stack([encode(h, weights).values for h, _ in dataset])
    positions = np.array([_position_of(d) for d in dataset])
    n = len(dataset)
    val_idx = np.arange(0, n, holdout_stride)
    db_idx = np.array([i for i in range(n) if i % holdout_stride != 0])
    if val_idx.size == 0 or db_idx.size == 0:
        return 0.0
    hits = 0
    counted = 0
    for qi in val_idx:
        geo = np.linalg.norm(positions[db_idx] - positions[qi], axis=1)
        if not np.any(geo <= radius):
            continue
        counted += 1
        d = np.linalg.norm(descs[db_idx] - descs[qi], axis=1)
        hits += geo[np.argmin(d)] <= radius
    return hits / counted if counted else 0.0


def train(dataset, cfg: TrainConfig, arch: EncoderArch | None = None) -> TrainResult:
    """Triplet-margin SGD training of the spatial encoder.

    ``dataset`` is a list of (heatmap, position) pairs.  Triplets are
    re-mined every epoch from the run seed; the returned weights are the
    ones with the best leave-out recall@1.  Fully deterministic for a
    fixed (dataset, cfg, arch).
    """
    if arch is None:
        shape = _as_array(dataset[0][0]).shape
        arch = EncoderArch(input_shape=shape)
    heatmaps = [_as_array(h) for h, _ in dataset]
    weights = init_weights(arch, cfg.seed)
    velocity = [
        [np.zeros_like(k), np.zeros_like(b)]
        for k, b in zip(weights.kernels, weights.biases)
    ]

    probe, _ = mine_triplets(
        dataset, cfg.r_pos, cfg.r_neg, cfg.n_pos, cfg.n_neg, seed=cfg.seed,
        margin=cfg.margin,
    )
    if not probe:
        raise EmptyResultError(
            "dataset yields no valid triplets under the positive/negative radii"
        )

    best = weights.copy()
    best_recall = -1.0
    history = []
    rng = np.random.default_rng(cfg.seed + 1)
    for epoch in range(cfg.max_epochs):
        lr = cfg.lr_at(epoch)
        batches, _ = mine_triplets(
            dataset, cfg.r_pos, cfg.r_neg, cfg.n_pos, cfg.n_neg,
            seed=cfg.seed + epoch, margin=cfg.margin,
        )
        order = rng.permutation(len(batches))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            chunk = [batches[i] for i in order[start : start + cfg.batch_size]]
            acc = [
                [np.zeros_like(k), np.zeros_like(b)]
                for k, b in zip(weights.kernels, weights.biases)
            ]
            for triplet in chunk:
                grads, loss = backward(triplet.bind(heatmaps), weights)
                losses.append(loss)
                for a, g in zip(acc, grads):
                    a[0] += g[0]
                    a[1] += g[1]
            inv = 1.0 / len(chunk)
            for l, (gk, gb) in enumerate(acc):
                gk = gk * inv + cfg.weight_decay * weights.kernels[l]
                gb = gb * inv + cfg.weight_decay * weights.biases[l]
                velocity[l][0] = cfg.momentum * velocity[l][0] - lr * gk
                velocity[l][1] = cfg.momentum * velocity[l][1] - lr * gb
                weights.kernels[l] += velocity[l][0]
                weights.biases[l] += velocity[l][1]
        recall = _val_recall1(dataset, weights, radius=cfg.r_pos)
        mean_loss = float(np.mean(losses)) if losses else 0.0
        history.append(
            {"epoch": epoch, "mean_loss": mean_loss, "lr": lr, "val_recall1": recall}
        )
        if recall > best_recall:
            best_recall = recall
            best = weights.copy()
    return TrainResult(best, history)
