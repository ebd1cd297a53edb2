"""Class/group balancing by subsampling (SUBY, SUBG) or reweighting (RWY, RWG)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import DataError, GroupedDataset


class SamplerKind(str, Enum):
    UNIFORM = "uniform"
    SUBY = "suby"
    SUBG = "subg"
    RWY = "rwy"
    RWG = "rwg"

    @property
    def subsamples(self) -> bool:
        return self in (SamplerKind.SUBY, SamplerKind.SUBG)

    @property
    def reweights(self) -> bool:
        return self in (SamplerKind.RWY, SamplerKind.RWG)


@dataclass(frozen=True, eq=False)
class SamplerSpec:
    """How training examples are drawn from a dataset of size ``n``.

    Subsampling kinds carry ``retained_indices`` (fixed once, before
    training). Reweighting kinds carry per-example sampling ``weights``
    summing to one. ``UNIFORM`` carries neither.
    """

    kind: SamplerKind
    n: int
    retained_indices: np.ndarray | None = None
    weights: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind.subsamples:
            if self.retained_indices is None or self.weights is not None:
                raise ValueError(f"{self.kind.value} needs retained_indices only")
            r = self.retained_indices
            if len(np.unique(r)) != len(r) or (len(r) and (r.min() < 0 or r.max() >= self.n)):
                raise ValueError("retained_indices must be unique and in range")
        elif self.kind.reweights:
            if self.weights is None or self.retained_indices is not None:
                raise ValueError(f"{self.kind.value} needs weights only")
            if len(self.weights) != self.n or not (self.weights > 0).all():
                raise ValueError("weights must be positive, one per example")
        elif self.retained_indices is not None or self.weights is not None:
            raise ValueError("uniform sampler takes no indices or weights")

    @property
    def pool(self) -> np.ndarray:
        """Indices an epoch iterates over (all rows unless subsampled)."""
        if self.retained_indices is not None:
            return self.retained_indices
        return np.arange(self.n)

    @property
    def epoch_size(self) -> int:
        return len(self.pool) if self.kind.subsamples else self.n


def uniform(ds: GroupedDataset) -> SamplerSpec:
    return SamplerSpec(SamplerKind.UNIFORM, len(ds))


def _subsample(members: list[np.ndarray], n: int, seed, kind: SamplerKind) -> SamplerSpec:
    sizes = [len(m) for m in members]
    if min(sizes) == 0:
        raise DataError(f"{kind.value}: a stratum has no examples")
    keep = min(sizes)
    rng = np.random.default_rng(seed)
    chosen = [rng.choice(m, size=keep, replace=False) for m in members]
    retained = np.sort(np.concatenate(chosen))
    return SamplerSpec(kind, n, retained_indices=retained, seed=seed)


def subsample_classes(ds: GroupedDataset, seed: int) -> SamplerSpec:
    """SUBY: keep a seeded uniform subset of every class, sized to the smallest."""
    if ds.n_classes < 2:
        raise DataError("need at least two classes")
    members = [np.flatnonzero(ds.classes == y) for y in range(ds.n_classes)]
    return _subsample(members, len(ds), seed, SamplerKind.SUBY)


def subsample_groups(ds: GroupedDataset, seed: int) -> SamplerSpec:
    """SUBG: keep a seeded uniform subset of every group, sized to the smallest."""
    members = [ds.group_index[k] for k in ds.group_keys()]
    return _subsample(members, len(ds), seed, SamplerKind.SUBG)


def _inverse_frequency(labels: np.ndarray, k: int, kind: SamplerKind) -> SamplerSpec:
    counts = np.bincount(labels, minlength=k)
    if (counts == 0).any():
        raise DataError(f"{kind.value}: a stratum has no examples")
    # Each stratum gets mass 1/k, spread evenly over its members.
    w = 1.0 / (k * counts[labels])
    return SamplerSpec(kind, len(labels), weights=w)


def reweight_classes(ds: GroupedDataset) -> SamplerSpec:
    """RWY: per-example weight proportional to 1 / class count."""
    if ds.n_classes < 2:
        raise DataError("need at least two classes")
    return _inverse_frequency(ds.classes, ds.n_classes, SamplerKind.RWY)


def reweight_groups(ds: GroupedDataset) -> SamplerSpec:
    """RWG: per-example weight proportional to 1 / group count."""
    return _inverse_frequency(ds.groups, ds.n_groups, SamplerKind.RWG)


def make_sampler(kind, ds: GroupedDataset, seed: int = 0) -> SamplerSpec:
    kind = SamplerKind(kind)
    if kind is SamplerKind.UNIFORM:
        return uniform(ds)
    if kind is SamplerKind.SUBY:
        return subsample_classes(ds, seed)
    if kind is SamplerKind.SUBG:
        return subsample_groups(ds, seed)
    if kind is SamplerKind.RWY:
        return reweight_classes(ds)
    return reweight_groups(ds)


def draw_batch(spec: SamplerSpec, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a single batch.

    Reweighting kinds draw ``batch_size`` indices independently with
    replacement; the other kinds take the head of a fresh permutation of the
    pool (no repeats, at most the pool size).
    """
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    if spec.kind.reweights:
        return rng.choice(spec.n, size=batch_size, replace=True, p=spec.weights)
    return rng.permutation(spec.pool)[:batch_size]


def epoch_batches(
    spec: SamplerSpec, batch_size: int | None, rng: np.random.Generator
) -> list[np.ndarray]:
    """Index batches for one epoch.

    An epoch is ``ceil(epoch_size / batch_size)`` batches. Subsampling and
    uniform kinds walk a reshuffled permutation of the pool; reweighting
    kinds draw every batch with replacement. ``batch_size=None`` means full
    batch: the whole pool, in index order, with no randomness consumed.
    """
    if batch_size is None:
        return [spec.pool]
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    n_batches = math.ceil(spec.epoch_size / batch_size)
    if spec.kind.reweights:
        flat = rng.choice(spec.n, size=n_batches * batch_size, replace=True, p=spec.weights)
        return [flat[i * batch_size : (i + 1) * batch_size] for i in range(n_batches)]
    perm = rng.permutation(spec.pool)
    return [perm[i * batch_size : (i + 1) * batch_size] for i in range(n_batches)]


def expected_unique(n_maj: int, k: int) -> float:
    """Expected number of distinct items seen after ``k`` uniform draws with
    replacement from ``n_maj`` items: ``n_maj * (1 - (1 - 1/n_maj)**k)``."""
    if n_maj < 1:
        raise ValueError("n_maj must be at least 1")
    if k < 0:
        raise ValueError("k must be non-negative")
    if n_maj == 1:
        return 1.0 if k > 0 else 0.0
    # -expm1(k*log1p(-1/n)) keeps precision when k/n is small.
    return n_maj * -math.expm1(k * math.log1p(-1.0 / n_maj))
