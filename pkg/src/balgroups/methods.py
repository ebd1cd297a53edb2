"""ERM, JTT and group DRO training on top of the balancing samplers."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from . import balancing
from .balancing import SamplerKind, SamplerSpec
from .data import GroupedDataset, build_grouped_dataset
from .evaluation import GroupMetrics, evaluate_snapshots, metrics_from_row
from .linear import LinearModel, TrainConfig, _gradient, init_model, model_to_json, sgd_step

DEFAULT_GDRO_ETA = 0.1


def derive_seed(seed: int, *path: int) -> int:
    """Child seed for an independent stream, stable across platforms."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *path])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True, eq=False)
class TrainedRun:
    """Checkpointed trajectory of one training run.

    Row ``i`` of every per-checkpoint array belongs to checkpoint ``i``,
    taken after ``steps[i]`` optimizer steps. Accuracy/loss arrays are
    ``(checkpoints, groups)`` with columns ordered as ``group_keys``.
    """

    method: str
    hparams: dict
    seed: int
    group_keys: list
    steps: np.ndarray
    epochs: np.ndarray
    weights: np.ndarray
    biases: np.ndarray
    wall_clock: np.ndarray
    accuracy: dict = field(repr=False)
    loss: dict = field(repr=False)
    counts: dict = field(repr=False)
    extras: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.steps)

    def snapshot(self, i: int) -> LinearModel:
        return LinearModel(self.weights[i].copy(), float(self.biases[i]))

    @property
    def final_model(self) -> LinearModel:
        return self.snapshot(len(self) - 1)

    def metrics(self, split: str, i: int) -> GroupMetrics:
        return metrics_from_row(
            self.accuracy[split][i], self.loss[split][i], self.counts[split], self.group_keys
        )

    def split_metrics(self, split: str) -> list[GroupMetrics]:
        return [self.metrics(split, i) for i in range(len(self))]

    @cached_property
    def val_metrics(self) -> list[GroupMetrics]:
        return self.split_metrics("val")

    def worst(self, split: str) -> np.ndarray:
        """Worst-group accuracy per checkpoint (empty groups ignored)."""
        return np.nanmin(self.accuracy[split], axis=1)

    def average(self, split: str) -> np.ndarray:
        c = self.counts[split]
        acc = np.nan_to_num(self.accuracy[split])
        return acc @ c / c.sum()


def _sampler_weights(spec: SamplerSpec, pool: np.ndarray) -> np.ndarray | None:
    if not spec.kind.reweights:
        return None
    w = spec.weights[pool]
    return w / w.sum()


def _train_loop(ds, sampler, cfg, seed, method, hparams, evals, objective=None, group_ids=None):
    """Shared optimization loop.

    ``objective(model, x, y, groups, weights) -> (grad_w, grad_b)`` overrides
    the plain (weighted) mean loss; it is how group DRO plugs in. ``groups``
    are ``group_ids`` rows (default ``ds.groups``).
    """
    if sampler.n != len(ds):
        raise ValueError("sampler was built for a different dataset")
    model = init_model(ds.n_features, derive_seed(seed, 0))
    rng = np.random.default_rng(derive_seed(seed, 1))
    x_all, y_all = ds.features, ds.signed_labels
    g_all = ds.groups if group_ids is None else group_ids
    full = cfg.batch_size is None
    if full:
        pool = sampler.pool
        if len(pool) == len(ds):
            fx, fy, fg = x_all, y_all, g_all
        else:
            fx, fy, fg = x_all[pool], y_all[pool], g_all[pool]
        fw = _sampler_weights(sampler, pool)
        steps_per_epoch = 1
    else:
        steps_per_epoch = -(-sampler.epoch_size // cfg.batch_size)
    every = cfg.eval_every or steps_per_epoch
    total = cfg.epochs * steps_per_epoch

    snaps_w, snaps_b, steps, clock = [], [], [], []
    t0 = time.perf_counter()
    step = 0
    for _ in range(cfg.epochs):
        if full:
            batches = [None]
        else:
            batches = balancing.epoch_batches(sampler, cfg.batch_size, rng)
        for idx in batches:
            if full:
                x, y, g, w = fx, fy, fg, fw
            else:
                x, y, g, w = x_all[idx], y_all[idx], g_all[idx], None
            if objective is None:
                gw, gb, _ = _gradient(model, x, y, w)
            else:
                gw, gb = objective(model, x, y, g, w)
            model = sgd_step(model, gw, gb, cfg)
            step += 1
            if step % every == 0 or step == total:
                snaps_w.append(model.weights)
                snaps_b.append(model.bias)
                steps.append(step)
                clock.append(time.perf_counter() - t0)

    W = np.array(snaps_w)
    B = np.array(snaps_b)
    acc, loss, counts = {}, {}, {}
    for split, eds in evals.items():
        if eds is None:
            continue
        acc[split], loss[split], counts[split] = evaluate_snapshots(W, B, eds, skip_empty=True)
    steps = np.array(steps)
    return TrainedRun(
        method=method,
        hparams=dict(hparams),
        seed=int(seed),
        group_keys=ds.group_keys(),
        steps=steps,
        epochs=steps / steps_per_epoch,
        weights=W,
        biases=B,
        wall_clock=np.array(clock),
        accuracy=acc,
        loss=loss,
        counts=counts,
    )


def _hparams(cfg: TrainConfig, **extra) -> dict:
    hp = {
        "learning_rate": cfg.learning_rate,
        "weight_decay": cfg.weight_decay,
        "batch_size": cfg.batch_size,
        "epochs": cfg.epochs,
    }
    hp.update(extra)
    return hp


def train_erm(
    ds_train: GroupedDataset,
    ds_val: GroupedDataset,
    sampler: SamplerSpec | None,
    cfg: TrainConfig,
    seed: int,
    ds_test: GroupedDataset | None = None,
    method: str | None = None,
) -> TrainedRun:
    """Empirical risk minimization over the sampler's example stream.

    With SUBY/SUBG/RWY/RWG samplers this is the corresponding balancing
    baseline. Metrics are recorded on the full training set, ``ds_val`` and
    optionally ``ds_test`` at every checkpoint.
    """
    if sampler is None:
        sampler = balancing.uniform(ds_train)
    if method is None:
        method = "erm" if sampler.kind is SamplerKind.UNIFORM else sampler.kind.value
    evals = {"train": ds_train, "val": ds_val, "test": ds_test}
    return _train_loop(ds_train, sampler, cfg, seed, method, _hparams(cfg), evals)


# --- JTT ------------------------------------------------------------------------


@dataclass(frozen=True)
class JttConfig:
    t_first_stage: int
    lambda_up: int
    inner: TrainConfig

    def __post_init__(self):
        if self.t_first_stage < 1:
            raise ValueError("t_first_stage must be at least 1")
        if self.lambda_up < 1 or int(self.lambda_up) != self.lambda_up:
            raise ValueError("lambda_up must be a positive integer")


def build_jtt_dataset(ds: GroupedDataset, error_indices, lambda_up: int) -> GroupedDataset:
    """Original rows in order, followed by ``lambda_up - 1`` extra copies of
    each error row, so every error appears ``lambda_up`` times in total."""
    err = np.unique(np.asarray(error_indices, dtype=np.int64))
    if err.size and (err[0] < 0 or err[-1] >= len(ds)):
        raise IndexError("error index out of range")
    if lambda_up < 1:
        raise ValueError("lambda_up must be at least 1")
    if err.size == 0 or lambda_up == 1:
        return ds
    rows = np.concatenate([np.arange(len(ds)), np.tile(err, lambda_up - 1)])
    return build_grouped_dataset(
        ds.features[rows],
        ds.classes[rows],
        ds.attributes[rows],
        n_classes=ds.n_classes,
        n_attributes=ds.n_attributes,
    )


def jtt_errors(model: LinearModel, ds: GroupedDataset) -> np.ndarray:
    """Rows misclassified by ``model`` (threshold at probability 0.5)."""
    pred = (ds.features @ model.weights + model.bias) >= 0
    return np.flatnonzero(pred != (ds.classes == 1))


def train_jtt(
    ds_train: GroupedDataset,
    ds_val: GroupedDataset,
    jtt: JttConfig,
    seed: int,
    ds_test: GroupedDataset | None = None,
) -> TrainedRun:
    """Just Train Twice.

    Phase 1 runs ERM for ``t_first_stage`` epochs on a seed derived from
    ``seed``; its final model's training errors are upsampled ``lambda_up``
    times and phase 2 trains a fresh ERM model with ``seed`` itself. The
    returned run covers phase 2; ``extras`` holds the phase-1 error rows.
    """
    cfg1 = TrainConfig(
        jtt.inner.learning_rate,
        jtt.inner.weight_decay,
        jtt.inner.batch_size,
        jtt.t_first_stage,
        jtt.inner.eval_every,
    )
    phase1 = train_erm(ds_train, ds_val, None, cfg1, derive_seed(seed, 2))
    errors = jtt_errors(phase1.final_model, ds_train)
    upweighted = build_jtt_dataset(ds_train, errors, jtt.lambda_up)
    evals = {"train": ds_train, "val": ds_val, "test": ds_test}
    hp = _hparams(jtt.inner, t_first_stage=jtt.t_first_stage, lambda_up=jtt.lambda_up)
    run = _train_loop(upweighted, balancing.uniform(upweighted), jtt.inner, seed, "jtt", hp, evals)
    run.extras["phase1_errors"] = errors
    return run


# --- group DRO --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GdroState:
    q: np.ndarray
    eta: float = DEFAULT_GDRO_ETA

    @classmethod
    def uniform(cls, n_groups: int, eta: float = DEFAULT_GDRO_ETA) -> GdroState:
        return cls(np.full(n_groups, 1.0 / n_groups), eta)


def gdro_update(state: GdroState, group_losses, present=None) -> GdroState:
    """Exponentiated-gradient ascent step on the group simplex.

    ``q_g <- q_g * exp(eta * loss_g)`` for the groups in ``present`` (all by
    default), then renormalize. Losses are shifted by their maximum before
    exponentiating; the shift cancels in the normalization.
    """
    losses = np.asarray(group_losses, dtype=np.float64)
    if losses.shape != state.q.shape:
        raise ValueError("one loss per group expected")
    if present is None:
        present = np.ones(len(losses), dtype=bool)
    if not np.isfinite(losses[present]).all():
        raise ValueError("non-finite group loss")
    # absent groups get multiplier exp(0)
    z = np.where(present, state.eta * np.where(present, losses, 0.0), 0.0)
    q = state.q * np.exp(z - z.max())
    return GdroState(q / q.sum(), state.eta)


def train_gdro(
    ds_train: GroupedDataset,
    ds_val: GroupedDataset,
    cfg: TrainConfig,
    eta: float = DEFAULT_GDRO_ETA,
    seed: int = 0,
    ds_test: GroupedDataset | None = None,
    sampler: SamplerSpec | None = None,
    group_ids=None,
) -> TrainedRun:
    """Group DRO: each step computes the mean loss of every group present in
    the batch, updates ``q`` by :func:`gdro_update`, then descends on
    ``sum_g q_g * mean_loss_g``.

    Groups are the dataset's (class, attribute) pairs unless ``group_ids``
    (dense ids, one per training row) says otherwise. Batches come from a
    sampler balancing those groups unless another ``sampler`` is given. The
    ``q`` trajectory is kept in ``extras["q"]`` (one row per step).
    """
    if eta < 0:
        raise ValueError("eta must be non-negative")
    if group_ids is None:
        g_ids, G = ds_train.groups, ds_train.n_groups
    else:
        g_ids = np.asarray(group_ids, dtype=np.int64)
        if g_ids.shape != (len(ds_train),) or g_ids.min() < 0:
            raise ValueError("group_ids must hold one non-negative id per training row")
        G = int(g_ids.max()) + 1
    if sampler is None:
        if group_ids is None:
            sampler = balancing.reweight_groups(ds_train)
        else:
            counts = np.bincount(g_ids, minlength=G)
            if (counts == 0).any():
                raise ValueError("group_ids must be dense from 0")
            sampler = SamplerSpec(SamplerKind.RWG, len(ds_train), weights=1.0 / (G * counts[g_ids]))
    state = [GdroState.uniform(G, eta)]
    history = []

    def objective(model, x, y, g, _w):
        margin = y * (x @ model.weights + model.bias)
        losses = np.logaddexp(0.0, -margin)
        counts = np.bincount(g, minlength=G)
        present = counts > 0
        sums = np.bincount(g, weights=losses, minlength=G)
        group_loss = np.zeros(G)
        group_loss[present] = sums[present] / counts[present]
        st = gdro_update(state[0], group_loss, present)
        state[0] = st
        history.append(st.q)
        per_example = np.where(present, st.q / np.maximum(counts, 1), 0.0)[g]
        gw, gb, _ = _gradient(model, x, y, per_example)
        return gw, gb

    evals = {"train": ds_train, "val": ds_val, "test": ds_test}
    run = _train_loop(
        ds_train, sampler, cfg, seed, "gdro", _hparams(cfg, eta=eta), evals, objective, g_ids
    )
    run.extras["q"] = np.array(history)
    return run


_COMMON_HPARAMS = ("learning_rate", "weight_decay", "batch_size", "epochs", "eval_every")
_METHOD_HPARAMS = {"jtt": ("t_first_stage", "lambda_up"), "gdro": ("eta",)}


def method_hparams(method: str, hparams: dict) -> dict:
    """The entries of ``hparams`` that ``method`` uses."""
    names = _COMMON_HPARAMS + _METHOD_HPARAMS.get(method.lower(), ())
    return {k: hparams[k] for k in names if k in hparams}


def train_method(method: str, ds_train, ds_val, hparams: dict, seed: int, ds_test=None):
    """Dispatch by method name (erm, jtt, gdro, suby, subg, rwy, rwg).

    The returned run's ``hparams`` are the entries of ``hparams`` the method
    uses, so they can serve as a lookup key for the same assignment.
    """
    method = method.lower()
    if method == "gdro":
        hparams = {"eta": DEFAULT_GDRO_ETA, **hparams}
    run = _dispatch(method, ds_train, ds_val, hparams, seed, ds_test)
    return replace(run, hparams=method_hparams(method, hparams))


def _dispatch(method, ds_train, ds_val, hparams, seed, ds_test):
    cfg = TrainConfig(
        learning_rate=hparams["learning_rate"],
        weight_decay=hparams["weight_decay"],
        batch_size=hparams.get("batch_size"),
        epochs=hparams["epochs"],
        eval_every=hparams.get("eval_every"),
    )
    if method == "erm":
        return train_erm(ds_train, ds_val, None, cfg, seed, ds_test)
    if method == "jtt":
        jcfg = JttConfig(hparams["t_first_stage"], hparams["lambda_up"], cfg)
        return train_jtt(ds_train, ds_val, jcfg, seed, ds_test)
    if method == "gdro":
        return train_gdro(ds_train, ds_val, cfg, hparams.get("eta", DEFAULT_GDRO_ETA), seed, ds_test)
    kind = SamplerKind(method)
    sampler = balancing.make_sampler(kind, ds_train, derive_seed(seed, 3))
    return train_erm(ds_train, ds_val, sampler, cfg, seed, ds_test)


# --- run directories ------------------------------------------------------------------


def _fmt_epoch(e: float) -> str:
    return str(int(e)) if float(e).is_integer() else repr(float(e))


def write_metrics_csv(run: TrainedRun, path) -> None:
    """``epoch,split,group,accuracy,loss,count``; group is written ``y:a``."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "split", "group", "accuracy", "loss", "count"])
        for i, e in enumerate(run.epochs):
            for split in run.accuracy:
                for g, (y, a) in enumerate(run.group_keys):
                    c = int(run.counts[split][g])
                    if c == 0:
                        continue
                    w.writerow(
                        [
                            _fmt_epoch(e),
                            split,
                            f"{y}:{a}",
                            repr(float(run.accuracy[split][i, g])),
                            repr(float(run.loss[split][i, g])),
                            c,
                        ]
                    )


def save_run(run: TrainedRun, directory) -> Path:
    """Write ``meta.json``, ``metrics.csv`` and ``snapshots/ckpt_#####.json``."""
    d = Path(directory)
    (d / "snapshots").mkdir(parents=True, exist_ok=True)
    meta = {
        "method": run.method,
        "hparams": run.hparams,
        "seed": run.seed,
        "group_keys": [list(k) for k in run.group_keys],
        "steps": run.steps.tolist(),
        "epochs": run.epochs.tolist(),
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    write_metrics_csv(run, d / "metrics.csv")
    for i in range(len(run)):
        (d / "snapshots" / f"ckpt_{i:05d}.json").write_text(
            model_to_json(run.snapshot(i)), encoding="utf-8"
        )
    return d
