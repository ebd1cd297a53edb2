"""Per-group metrics, worst-group accuracy and model selection."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import DataError, GroupedDataset
from .linear import LinearModel, log1pexp


@dataclass(frozen=True)
class GroupMetrics:
    per_group_accuracy: dict[tuple[int, int], float]
    worst_group_accuracy: float
    average_accuracy: float
    per_group_counts: dict[tuple[int, int], int]
    per_group_loss: dict[tuple[int, int], float] | None = None

    @property
    def group_mean_accuracy(self) -> float:
        """Unweighted mean over groups (not the default average)."""
        return float(np.mean(list(self.per_group_accuracy.values())))


class SelectionCriterion(str, Enum):
    WORST_GROUP = "worst"
    AVERAGE = "avg"

    def value_of(self, m: GroupMetrics) -> float:
        if self is SelectionCriterion.WORST_GROUP:
            return m.worst_group_accuracy
        return m.average_accuracy


def group_metrics_from_predictions(correct, groups, keys, losses=None, skip_empty=False):
    """Assemble GroupMetrics from a boolean ``correct`` vector and flat group ids."""
    acc, counts, gl = {}, {}, {}
    correct = np.asarray(correct, dtype=bool)
    for gid, key in enumerate(keys):
        mask = groups == gid
        c = int(mask.sum())
        if c == 0:
            if skip_empty:
                continue
            raise DataError(f"group {key} has no examples")
        counts[key] = c
        acc[key] = float(correct[mask].mean())
        if losses is not None:
            gl[key] = float(losses[mask].mean())
    if not counts:
        raise DataError("no examples")
    total = sum(counts.values())
    avg = sum(acc[k] * counts[k] for k in counts) / total
    return GroupMetrics(acc, min(acc.values()), avg, counts, gl if losses is not None else None)


def evaluate(model: LinearModel, ds: GroupedDataset, skip_empty: bool = False) -> GroupMetrics:
    """Accuracy per group with prediction = class 1 iff P(class 1) >= 0.5."""
    m = ds.features @ model.weights + model.bias
    correct = (m >= 0) == (ds.classes == 1)
    losses = log1pexp(-ds.signed_labels * m)
    return group_metrics_from_predictions(correct, ds.groups, ds.group_keys(), losses, skip_empty)


def evaluate_snapshots(weights: np.ndarray, biases: np.ndarray, ds: GroupedDataset, skip_empty=False):
    """Evaluate a stack of models (rows of ``weights``) in one pass.

    Returns ``(accuracy, loss, counts)`` with shapes ``(k, G)``, ``(k, G)``
    and ``(G,)``; columns follow ``ds.group_keys()``.
    """
    margins = ds.features @ weights.T + biases  # (n, k)
    correct = (margins >= 0) == (ds.classes == 1)[:, None]
    losses = log1pexp(-ds.signed_labels[:, None] * margins)
    groups = ds.groups
    counts = np.bincount(groups, minlength=ds.n_groups)
    if (counts == 0).any() and not skip_empty:
        raise DataError("dataset has an empty group")
    k = weights.shape[0]
    acc = np.full((k, ds.n_groups), np.nan)
    loss = np.full((k, ds.n_groups), np.nan)
    for g in range(ds.n_groups):
        mask = groups == g
        if counts[g]:
            acc[:, g] = correct[mask].mean(axis=0)
            loss[:, g] = losses[mask].mean(axis=0)
    return acc, loss, counts


def metrics_from_row(acc_row, loss_row, counts, keys) -> GroupMetrics:
    present = [g for g in range(len(keys)) if counts[g] > 0]
    per = {keys[g]: float(acc_row[g]) for g in present}
    cnt = {keys[g]: int(counts[g]) for g in present}
    total = sum(cnt.values())
    avg = sum(per[k] * cnt[k] for k in per) / total
    return GroupMetrics(
        per, min(per.values()), avg, cnt, {keys[g]: float(loss_row[g]) for g in present}
    )


def select_best(runs, criterion=SelectionCriterion.WORST_GROUP):
    """Best (run, checkpoint) over all runs by validation ``criterion``.

    Ties go to the earliest checkpoint, then to the lowest run index.
    Returns ``(run_index, checkpoint_index, validation_metrics)``.
    """
    criterion = SelectionCriterion(criterion)
    if not runs:
        raise ValueError("no runs to select from")
    best_key, best = None, None
    for r, run in enumerate(runs):
        for e, m in enumerate(run.val_metrics):
            key = (-criterion.value_of(m), e, r)
            if best_key is None or key < best_key:
                best_key, best = key, (r, e, m)
    if best is None:
        raise ValueError("runs carry no validation metrics")
    return best


def summarize_seeds(values) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1 denominator; 0 for n = 1)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no values")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1))


LOG_SCALE_HPARAMS = ("learning_rate", "weight_decay")


@dataclass(frozen=True)
class TopKSummary:
    k: int
    hparams: dict[str, tuple[float, float]]
    test_worst: list[float]
    range: tuple[float, float]
    delta: float


def top_k_summary(runs, k: int = 5) -> TopKSummary:
    """Hyper-parameter mean/std over the ``k`` runs with highest validation
    worst-group accuracy.

    ``runs`` are mappings (or objects) with ``hparams``, ``val_worst`` and
    ``test_worst``. Learning rate and weight decay are summarized in log10.
    ``delta`` is top-1 minus top-k test worst-group accuracy.
    """
    rows = [r if isinstance(r, dict) else vars(r) for r in runs]
    if k < 1:
        raise ValueError("k must be positive")
    if len(rows) < k:
        raise ValueError(f"need at least {k} runs, got {len(rows)}")
    top = sorted(range(len(rows)), key=lambda i: (-rows[i]["val_worst"], i))[:k]
    top = [rows[i] for i in top]
    values = defaultdict(list)
    for r in top:
        for name, v in r["hparams"].items():
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                values[name].append(math.log10(v) if name in LOG_SCALE_HPARAMS else float(v))
    hp = {name: summarize_seeds(v) for name, v in values.items() if len(v) == k}
    tw = [float(r["test_worst"]) for r in top]
    return TopKSummary(k, hp, tw, (min(tw), max(tw)), tw[0] - tw[-1])
