"""Linear spurious-correlation toy: training several methods over seeds,
learning curves, and nearest-neighbour noise heatmaps."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import DataError, GroupedDataset, SyntheticConfig, synth_generate
from .evaluation import summarize_seeds
from .linear import LinearModel
from .methods import TrainedRun, train_method


@dataclass(frozen=True)
class GridSpec:
    x_range: tuple[float, float] = (-8.0, 8.0)
    y_range: tuple[float, float] = (-2.0, 2.0)
    nx: int = 200
    ny: int = 50

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid coordinates, x varying fastest."""
        xs = np.linspace(*self.x_range, self.nx)
        ys = np.linspace(*self.y_range, self.ny)
        u, v = np.meshgrid(xs, ys)
        return u.ravel(), v.ravel()


def nearest_rows(train_ds: GroupedDataset, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Index of the training row whose scaled (spurious, core) pair is
    closest to each ``(u, v)``; ties go to the lowest row index."""
    if len(train_ds) == 0:
        raise DataError("empty training set")
    sc = train_ds.features[:, :2]
    out = np.empty(len(u), dtype=np.int64)
    chunk = 2048
    for s in range(0, len(u), chunk):
        d2 = (u[s : s + chunk, None] - sc[None, :, 0]) ** 2 + (v[s : s + chunk, None] - sc[None, :, 1]) ** 2
        out[s : s + chunk] = np.argmin(d2, axis=1)  # first minimum
    return out


def heatmap(model: LinearModel, train_ds: GroupedDataset, grid: GridSpec = GridSpec()):
    """P(class +1) over a grid of (spurious, core) values, completing each
    point with the noise block of its nearest training example.

    Returns ``(u, v, prob)`` flat arrays of length ``nx * ny``.
    """
    u, v = grid.points()
    nn = nearest_rows(train_ds, u, v)
    w = model.weights
    noise_part = train_ds.features[:, 2:] @ w[2:]
    logits = u * w[0] + v * w[1] + noise_part[nn] + model.bias
    return u, v, expit(logits)


def write_heatmap_csv(path, u, v, prob) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["x_spu", "x_core", "prob_class_pos"])
        for row in zip(u, v, prob):
            wr.writerow([repr(float(c)) for c in row])


# --- the multi-seed experiment -------------------------------------------------------

TOY_METHODS = ("erm", "subg", "rwg")


def toy_hparams(
    learning_rate: float = 0.1,
    weight_decay: float = 0.0,
    iterations: int = 5000,
    eval_every: int = 10,
    batch_size: int | None = None,
) -> dict:
    """Default toy optimizer: full-batch gradient descent (one step per epoch)."""
    return {
        "learning_rate": learning_rate,
        "weight_decay": weight_decay,
        "batch_size": batch_size,
        "epochs": iterations,
        "eval_every": eval_every,
        "t_first_stage": 50,
        "lambda_up": 20,
    }


def toy_splits(cfg: SyntheticConfig, seed_index: int = 0):
    """Train and validation splits from the training distribution and a
    group-balanced test split, all derived from ``cfg.seed + seed_index``."""
    c = cfg.replace(seed=cfg.seed + seed_index)
    train = synth_generate(c, 0, c.n_train)
    val = synth_generate(c, 1, c.n_val)
    test = synth_generate(c, 2, c.n_test, group_balanced=True)
    return train, val, test


@dataclass
class MethodSummary:
    method: str
    best_index: list[int] = field(default_factory=list)
    best_step: list[int] = field(default_factory=list)
    best_test_worst: list[float] = field(default_factory=list)
    final_test_worst: list[float] = field(default_factory=list)
    best_val_worst: list[float] = field(default_factory=list)
    heat: np.ndarray | None = None
    runs: list[TrainedRun] = field(default_factory=list, repr=False)

    def stats(self) -> dict[str, float]:
        b = summarize_seeds(self.best_test_worst)
        f = summarize_seeds(self.final_test_worst)
        v = summarize_seeds(self.best_val_worst)
        return {
            "best_test_worst_mean": b[0],
            "best_test_worst_std": b[1],
            "final_test_worst_mean": f[0],
            "final_test_worst_std": f[1],
            "best_val_worst_mean": v[0],
            "best_val_worst_std": v[1],
            "best_step_mean": float(np.mean(self.best_step)),
        }


@dataclass
class ToyResult:
    cfg: SyntheticConfig
    hparams: dict
    n_seeds: int
    grid: GridSpec
    methods: dict[str, MethodSummary]
    grid_points: tuple[np.ndarray, np.ndarray] | None = None

    def write(self, out_dir) -> Path:
        """heatmap_<m>.csv, curves_<m>.csv and metrics_summary.csv."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        u, v = self.grid_points
        for m, s in self.methods.items():
            if s.heat is not None:
                write_heatmap_csv(out / f"heatmap_{m}.csv", u, v, s.heat)
            with open(out / f"curves_{m}.csv", "w", newline="", encoding="utf-8") as f:
                wr = csv.writer(f, lineterminator="\n")
                wr.writerow(["seed", "step", "train_worst", "val_worst", "test_worst"])
                for k, run in enumerate(s.runs):
                    tr, va, te = run.worst("train"), run.worst("val"), run.worst("test")
                    for i, step in enumerate(run.steps):
                        wr.writerow([k, int(step), repr(float(tr[i])), repr(float(va[i])), repr(float(te[i]))])
        with open(out / "metrics_summary.csv", "w", newline="", encoding="utf-8") as f:
            wr = csv.writer(f, lineterminator="\n")
            cols = list(next(iter(self.methods.values())).stats())
            wr.writerow(["method", "n_seeds", *cols])
            for m, s in self.methods.items():
                st = s.stats()
                wr.writerow([m, self.n_seeds, *(repr(st[c]) for c in cols)])
        return out


def run_toy(
    cfg: SyntheticConfig = SyntheticConfig(),
    methods=TOY_METHODS,
    n_seeds: int = 8,
    hparams: dict | None = None,
    grid: GridSpec | None = GridSpec(),
    keep_runs: bool = True,
) -> ToyResult:
    """Train each method on ``n_seeds`` independent draws of the toy problem.

    For every run the checkpoint with the best validation worst-group
    accuracy is selected (earliest on ties); its test worst-group accuracy,
    the final checkpoint's, and a heatmap of the selected model are kept.
    Heatmaps are averaged over seeds.
    """
    hparams = dict(toy_hparams() if hparams is None else hparams)
    summaries = {m: MethodSummary(m) for m in methods}
    points = grid.points() if grid is not None else None
    for k in range(n_seeds):
        train, val, test = toy_splits(cfg, k)
        for m in methods:
            run = train_method(m, train, val, hparams, seed=cfg.seed + k, ds_test=test)
            s = summaries[m]
            vw = run.worst("val")
            i = int(np.argmax(vw))
            tw = run.worst("test")
            s.best_index.append(i)
            s.best_step.append(int(run.steps[i]))
            s.best_val_worst.append(float(vw[i]))
            s.best_test_worst.append(float(tw[i]))
            s.final_test_worst.append(float(tw[-1]))
            if grid is not None:
                _, _, p = heatmap(run.snapshot(i), train, grid)
                s.heat = p / n_seeds if s.heat is None else s.heat + p / n_seeds
            if keep_runs:
                s.runs.append(run)
    return ToyResult(cfg, hparams, n_seeds, grid, summaries, points)
