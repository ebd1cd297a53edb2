"""Grouped datasets, group statistics, CSV ingestion and the synthetic
spurious-correlation generator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised when input data violates a dataset contract."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GroupedDataset:
    """Feature matrix with class labels, attribute labels and a group index.

    Groups are (class, attribute) pairs. ``group_index`` lists the sorted
    member rows of every pair in ``range(n_classes) x range(n_attributes)``,
    including empty ones.
    """

    features: np.ndarray
    classes: np.ndarray
    attributes: np.ndarray
    n_classes: int
    n_attributes: int
    group_index: dict[tuple[int, int], np.ndarray] = field(repr=False)

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_groups(self) -> int:
        return self.n_classes * self.n_attributes

    @property
    def groups(self) -> np.ndarray:
        """Flat group id per row, ``y * n_attributes + a``."""
        return self.classes * self.n_attributes + self.attributes

    @property
    def signed_labels(self) -> np.ndarray:
        """Binary labels in the {-1, +1} convention used by the loss."""
        if self.n_classes != 2:
            raise DataError("signed labels need exactly two classes")
        return 2.0 * self.classes - 1.0

    def group_keys(self) -> list[tuple[int, int]]:
        return [(y, a) for y in range(self.n_classes) for a in range(self.n_attributes)]

    def group_counts(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.n_groups)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.classes, minlength=self.n_classes)

    def subset(self, rows) -> GroupedDataset:
        """Dataset made of ``rows`` (copied, in the given order)."""
        rows = np.asarray(rows, dtype=np.int64)
        return build_grouped_dataset(
            self.features[rows],
            self.classes[rows],
            self.attributes[rows],
            n_classes=self.n_classes,
            n_attributes=self.n_attributes,
        )


def _check_ids(ids: np.ndarray, k: int | None, name: str) -> int:
    if ids.size == 0:
        if k is None:
            raise DataError(f"cannot infer {name} count from an empty dataset")
        return k
    if ids.min() < 0:
        raise DataError(f"negative {name} id")
    if k is None:
        k = int(ids.max()) + 1
        present = np.unique(ids)
        if len(present) != k:
            raise DataError(f"{name} ids are not dense from 0: {present.tolist()}")
    elif ids.max() >= k:
        raise DataError(f"{name} id {int(ids.max())} out of range for {k} values")
    return k


def build_grouped_dataset(
    features,
    classes,
    attributes,
    n_classes: int | None = None,
    n_attributes: int | None = None,
) -> GroupedDataset:
    """Validate inputs and build the group index.

    When ``n_classes``/``n_attributes`` are omitted the ids must be dense
    from 0; passing them allows absent values (e.g. empty minority groups).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DataError("features must be a 2-D matrix")
    y = np.asarray(classes)
    a = np.asarray(attributes)
    if y.ndim != 1 or a.ndim != 1:
        raise DataError("classes and attributes must be 1-D")
    n = x.shape[0]
    if len(y) != n or len(a) != n:
        raise DataError(
            f"length mismatch: {n} feature rows, {len(y)} classes, {len(a)} attributes"
        )
    if not np.isfinite(x).all():
        raise DataError("features contain non-finite entries")
    for v, name in ((y, "class"), (a, "attribute")):
        if v.size and not np.issubdtype(v.dtype, np.integer):
            if not np.all(np.mod(v, 1) == 0):
                raise DataError(f"{name} ids must be integers")
    y = y.astype(np.int64)
    a = a.astype(np.int64)
    n_classes = _check_ids(y, n_classes, "class")
    n_attributes = _check_ids(a, n_attributes, "attribute")

    g = y * n_attributes + a
    order = np.argsort(g, kind="stable")
    bounds = np.searchsorted(g[order], np.arange(n_classes * n_attributes + 1))
    index = {}
    for yy in range(n_classes):
        for aa in range(n_attributes):
            k = yy * n_attributes + aa
            index[(yy, aa)] = _frozen(order[bounds[k] : bounds[k + 1]])
    return GroupedDataset(_frozen(x), _frozen(y), _frozen(a), n_classes, n_attributes, index)


@dataclass(frozen=True)
class GroupStats:
    counts: dict[tuple[int, int], int]
    p_y_given_a: dict[tuple[int, int], float]
    p_y: dict[int, float]


def group_stats_from_counts(counts: dict[tuple[int, int], int]) -> GroupStats:
    """Conditional and marginal class probabilities from (y, a) -> count."""
    if not counts:
        raise DataError("no groups")
    ys = sorted({y for y, _ in counts})
    attrs = sorted({a for _, a in counts})
    counts = {(y, a): int(counts.get((y, a), 0)) for y in ys for a in attrs}
    if any(c < 0 for c in counts.values()):
        raise DataError("negative count")
    total = sum(counts.values())
    if total == 0:
        raise DataError("empty dataset")
    p_y_given_a = {}
    for a in attrs:
        stratum = sum(counts[(y, a)] for y in ys)
        if stratum == 0:
            raise DataError(f"attribute {a} has no examples")
        for y in ys:
            p_y_given_a[(y, a)] = counts[(y, a)] / stratum
    p_y = {y: sum(counts[(y, a)] for a in attrs) / total for y in ys}
    return GroupStats(counts, p_y_given_a, p_y)


def group_stats(ds: GroupedDataset) -> GroupStats:
    gc = ds.group_counts()
    counts = {(y, a): int(gc[y * ds.n_attributes + a]) for y, a in ds.group_keys()}
    return group_stats_from_counts(counts)


# --- CSV ---------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    class_column: str = "y"
    attribute_column: str = "a"


def load_csv(path, schema: CsvSchema = CsvSchema()):
    """Load a grouped dataset from a CSV file with a header row.

    Class and attribute cells are categorical tokens mapped to dense ids in
    order of first appearance; every other column must be numeric.

    Returns
    -------
    ds : GroupedDataset
    mappings : dict
        ``{"classes": {token: id}, "attributes": {token: id}}``
    """
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    for col in (schema.class_column, schema.attribute_column):
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    if not body:
        raise DataError(f"{path}: no data rows")
    ci = header.index(schema.class_column)
    ai = header.index(schema.attribute_column)
    feat_cols = [i for i in range(len(header)) if i not in (ci, ai)]

    class_map: dict[str, int] = {}
    attr_map: dict[str, int] = {}
    x = np.empty((len(body), len(feat_cols)))
    y = np.empty(len(body), dtype=np.int64)
    a = np.empty(len(body), dtype=np.int64)
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: line {r + 2} has {len(row)} cells, expected {len(header)}")
        y[r] = class_map.setdefault(row[ci], len(class_map))
        a[r] = attr_map.setdefault(row[ai], len(attr_map))
        for j, c in enumerate(feat_cols):
            try:
                x[r, j] = float(row[c])
            except ValueError:
                raise DataError(
                    f"{path}: line {r + 2}, column {header[c]!r}: non-numeric {row[c]!r}"
                ) from None
    ds = build_grouped_dataset(x, y, a)
    return ds, {"classes": class_map, "attributes": attr_map}


def write_csv(ds: GroupedDataset, path, feature_names=None) -> None:
    """Write features, then ``y`` and ``a`` columns; floats use repr so a
    reload reproduces them bit for bit."""
    p = ds.n_features
    names = list(feature_names) if feature_names else [f"f{j}" for j in range(p)]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(names + ["y", "a"])
        for row, yy, aa in zip(ds.features, ds.classes, ds.attributes):
            w.writerow([repr(float(v)) for v in row] + [int(yy), int(aa)])


# --- synthetic data ------------------------------------------------------------

NOISE_SCALINGS = ("none", "sqrt_dim")


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the linear spurious-correlation toy problem.

    ``noise_scaling="none"`` draws each noise coordinate with standard
    deviation ``sigma``; ``"sqrt_dim"`` divides it by ``sqrt(d)`` so the
    noise block has a fixed total energy regardless of ``d``.
    """

    rho_core: float = 1.0
    rho_spu: float = 0.8
    gamma_spu: float = 4.0
    gamma_core: float = 1.0
    gamma_noise: float = 20.0
    sigma: float = 0.15
    d: int = 1200
    n_train: int = 1000
    n_val: int = 1000
    n_test: int = 10000
    seed: int = 0
    noise_scaling: str = "none"

    def __post_init__(self):
        for name in ("rho_core", "rho_spu"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise DataError(f"{name}={v} outside [-1, 1]")
        for name in ("gamma_spu", "gamma_core", "gamma_noise", "sigma"):
            if not getattr(self, name) > 0:
                raise DataError(f"{name} must be positive")
        for name in ("d", "n_train", "n_val", "n_test"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DataError(f"{name} must be a positive integer")
        if self.noise_scaling not in NOISE_SCALINGS:
            raise DataError(f"noise_scaling must be one of {NOISE_SCALINGS}")

    @property
    def noise_std(self) -> float:
        if self.noise_scaling == "sqrt_dim":
            return self.sigma / math.sqrt(self.d)
        return self.sigma

    def replace(self, **kw) -> SyntheticConfig:
        return SyntheticConfig(**{**self.__dict__, **kw})


def read_config_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def load_synthetic_config(path, **overrides) -> SyntheticConfig:
    types = {f.name: f.type for f in fields(SyntheticConfig)}
    kw = {}
    for k, v in {**read_config_file(path), **overrides}.items():
        if k not in types:
            raise DataError(f"unknown SyntheticConfig key {k!r}")
        t = types[k]
        kw[k] = v if t == "str" or not isinstance(v, str) else (int(v) if t == "int" else float(v))
    return SyntheticConfig(**kw)


def synth_generate(
    cfg: SyntheticConfig,
    split_seed_offset: int = 0,
    n: int | None = None,
    group_balanced: bool = False,
) -> GroupedDataset:
    """Draw a split of the toy problem.

    Classes are stored as ids {0, 1} for labels {-1, +1}. The attribute is 0
    when the spurious sign agrees with the label (majority) and 1 otherwise
    (minority). Features are ``[g_spu*x_spu, g_core*x_core, g_noise*x_noise]``.

    With ``group_balanced`` every (class, attribute) group gets exactly
    ``n // 4`` examples instead of sampling the attribute from ``rho_spu``.
    The output is a pure function of ``(cfg.seed, split_seed_offset)`` and the
    size arguments.
    """
    n = cfg.n_train if n is None else int(n)
    if n < 1:
        raise DataError("n must be positive")
    rng = np.random.default_rng([int(cfg.seed) & (2**64 - 1), int(split_seed_offset)])
    if group_balanced:
        if n % 4:
            raise DataError("group-balanced split size must be divisible by 4")
        m = n // 4
        y = np.repeat([1, 1, -1, -1], m)
        s_spu = np.tile(np.repeat([1, -1], m), 2)
        perm = rng.permutation(n)
        y, s_spu = y[perm], s_spu[perm]
    else:
        y = np.where(rng.random(n) < 0.5, 1, -1)
        s_spu = np.where(rng.random(n) < (1 + cfg.rho_spu) / 2, 1, -1)
    s_core = np.where(rng.random(n) < (1 + cfg.rho_core) / 2, 1, -1)
    a_spu = y * s_spu
    a_core = y * s_core
    x_spu = rng.normal(a_spu, cfg.sigma)
    x_core = rng.normal(a_core, cfg.sigma)
    x_noise = rng.normal(0.0, cfg.noise_std, size=(n, cfg.d))
    x = np.empty((n, cfg.d + 2))
    x[:, 0] = cfg.gamma_spu * x_spu
    x[:, 1] = cfg.gamma_core * x_core
    x[:, 2:] = cfg.gamma_noise * x_noise
    classes = (y > 0).astype(np.int64)
    attributes = (s_spu < 0).astype(np.int64)
    return build_grouped_dataset(x, classes, attributes, n_classes=2, n_attributes=2)


def core_only_error(sigma: float) -> float:
    """Misclassification probability of sign(x_core) under unit-mean core
    features with noise ``sigma``: 1 - Phi(1/sigma)."""
    if not sigma > 0:
        raise DataError("sigma must be positive")
    return 0.5 * math.erfc(1.0 / (sigma * math.sqrt(2.0)))
