"""Seeded random hyper-parameter search with multi-seed repeats."""

from __future__ import annotations

import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .methods import DEFAULT_GDRO_ETA, derive_seed, method_hparams, train_method
from .records import RecordStore, RunRecord, record_from_run

METHODS = ("erm", "jtt", "gdro", "suby", "subg", "rwy", "rwg")


@dataclass(frozen=True)
class SearchSpace:
    """Grids sampled independently per trial; defaults follow the benchmark protocol."""

    learning_rates: tuple = (1e-5, 1e-4, 1e-3)
    weight_decays: tuple = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    batch_sizes: tuple = (2, 4, 8, 16, 32, 64, 128)
    epochs: int = 60
    lambda_ups: tuple = (4, 5, 6, 20, 50, 100)
    t_first_stages: tuple = (1, 5, 10)
    etas: tuple = (DEFAULT_GDRO_ETA,)
    eval_every: int | None = None
    n_trials: int = 50
    n_seeds: int = 5
    extra: dict = field(default_factory=dict)

    def grids(self, method: str) -> dict[str, tuple]:
        g = {
            "learning_rate": tuple(self.learning_rates),
            "weight_decay": tuple(self.weight_decays),
            "batch_size": tuple(self.batch_sizes),
        }
        if method == "jtt":
            g["lambda_up"] = tuple(self.lambda_ups)
            g["t_first_stage"] = tuple(self.t_first_stages)
        if method == "gdro":
            g["eta"] = tuple(self.etas)
        for name, grid in g.items():
            if len(grid) == 0:
                raise ValueError(f"empty grid for {name}")
        return g


def _method_salt(method: str) -> int:
    return zlib.crc32(method.encode())


def draw_assignments(space: SearchSpace, method: str, master_seed: int) -> list[dict]:
    """``n_trials`` hyper-parameter assignments, each value uniform over its grid."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(derive_seed(master_seed, _method_salt(method)))
    grids = space.grids(method)
    out = []
    for _ in range(space.n_trials):
        a = {}
        for name, grid in grids.items():
            v = grid[int(rng.integers(len(grid)))]
            a[name] = v.item() if hasattr(v, "item") else v
        a["epochs"] = space.epochs
        if space.eval_every is not None:
            a["eval_every"] = space.eval_every
        a.update(space.extra)
        out.append(a)
    return out


def _job(args):
    method, data, hparams, seed, dataset, trial, s = args
    train, val, test = data
    run = train_method(method, train, val, hparams, seed, test)
    return record_from_run(run, dataset, trial=trial, seed_index=s)


def random_search(
    space: SearchSpace,
    data,
    method: str,
    master_seed: int,
    dataset: str = "toy",
    store: RecordStore | None = None,
    workers: int = 1,
) -> list[RunRecord]:
    """Train every (assignment, seed) pair and return one record each.

    ``data`` is ``(train, val, test)``. Pairs already present in ``store``
    are not retrained, so an interrupted search resumes where it stopped.
    New records are appended to ``store`` in job order by this process only.
    """
    assignments = draw_assignments(space, method, master_seed)
    jobs = []
    for t, hp in enumerate(assignments):
        for s in range(space.n_seeds):
            seed = derive_seed(master_seed, _method_salt(method), t, s)
            jobs.append((method, data, hp, seed, dataset, t, s))

    results: list[RunRecord | None] = [None] * len(jobs)
    todo = []
    for i, (m, _, hp, seed, ds_id, _, _) in enumerate(jobs):
        probe = RunRecord(m, ds_id, method_hparams(m, hp), seed, 0, 0, 0, 0, 0, {}, 0)
        if store is not None and probe.key in store:
            results[i] = store.get(probe.key)
        else:
            todo.append(i)

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fresh = pool.map(_job, [jobs[i] for i in todo])
            for i, rec in zip(todo, fresh):
                results[i] = rec
                if store is not None:
                    store.append(rec)
    else:
        for i in todo:
            rec = _job(jobs[i])
            results[i] = rec
            if store is not None:
                store.append(rec)
    return results


def toy_search_space(**overrides) -> SearchSpace:
    """A small full-batch search for the linear toy problem.

    The benchmark learning rates are far too small for a linear model on
    unnormalized toy features, so larger ones are used; the weight-decay grid
    is the benchmark's.
    """
    kw = dict(
        learning_rates=(0.01, 0.03, 0.1),
        weight_decays=(1e-4, 1e-3, 1e-2, 1e-1, 1.0),
        batch_sizes=(None,),
        epochs=1000,
        lambda_ups=(4, 5, 6, 20, 50, 100),
        t_first_stages=(10, 50, 100),
        eval_every=10,
        n_trials=8,
        n_seeds=3,
    )
    kw.update(overrides)
    return SearchSpace(**kw)
