"""Acceptance criteria, one test each.

Every test records a one-line PASS/FAIL verdict (printed in the terminal
summary and on stdout) before asserting, so a failing criterion still
reports its measured values. Tolerances are fixed here and not tuned to
results.
"""

import math

import numpy as np
import pytest
from scipy import integrate

import conftest
from balgroups.balancing import (
    draw_batch,
    expected_unique,
    reweight_classes,
    subsample_classes,
    subsample_groups,
    uniform,
)
from balgroups.data import build_grouped_dataset, core_only_error, group_stats_from_counts
from balgroups.evaluation import SelectionCriterion
from balgroups.linear import TrainConfig, batch_gradient
from balgroups.methods import JttConfig, train_erm, train_gdro, train_jtt
from balgroups.stats import alexander_govern
from balgroups.table import aggregate, cells_from_csv, table_rows
from conftest import CELEBA, CIVILCOMMENTS, MULTINLI, WATERBIRDS, dataset_from_counts
from test_linear import fd_gradient, random_instance
from test_stats import WORKED, ag_mpmath
from test_table import DATASETS, PUBLISHED, PUBLISHED_ROWS

# pinned tolerances
PCT_TOL = 0.05  # percentage points
GAP_ERM_SUBG = 0.15  # 2(a)
BAND_RWG_SUBG = 0.05  # 2(b)
DROP_RWG_FINAL = 0.05  # 2(c)
FIGURE_SECONDS = 600.0
MC_TRIALS = 10**5
MC_REL_TOL = 0.01
GRAD_REL_TOL = 1e-6
EQUIV_TOL = 1e-12
RWY_DRAWS = 10**5
NULL_SIMS = 2000
NULL_RANGE = (0.03, 0.07)
AG_ORACLE_TOL = 1e-6
AVERAGE_TOL = 0.1


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES[n] = line
    print(line)


# ---------------------------------------------------------------------------------


PRINTED = {
    "celeba": (CELEBA, {(1, 0): 24.2, (1, 1): 2.0, (0, 0): 75.8, (0, 1): 98.0}, {1: 14.9, 0: 85.1}),
    "waterbirds": (WATERBIRDS, {(0, 0): 1.6, (0, 1): 85.2, (1, 0): 98.4, (1, 1): 14.8}, {0: 23.2, 1: 76.8}),
    "civilcomments": (CIVILCOMMENTS, {(0, 0): 83.6, (0, 1): 92.1, (1, 0): 16.4, (1, 1): 7.9}, {0: 88.7, 1: 11.3}),
    "multinli": (
        MULTINLI,
        {(0, 0): 30.0, (0, 1): 76.1, (1, 0): 35.2, (1, 1): 10.4, (2, 0): 34.8, (2, 1): 13.6},
        {0: 33.3, 1: 33.4, 2: 33.3},
    ),
}


def test_criterion_01_group_statistics():
    worst, n = 0.0, 0
    for counts, cond, marg in PRINTED.values():
        s = group_stats_from_counts(counts)
        for k, v in cond.items():
            worst = max(worst, abs(100 * s.p_y_given_a[k] - v))
            n += 1
        for k, v in marg.items():
            worst = max(worst, abs(100 * s.p_y[k] - v))
            n += 1
    ok = worst <= PCT_TOL
    report(1, ok, f"{n} printed percentages, max deviation {worst:.4f} pp (tol {PCT_TOL})")
    assert ok


@pytest.mark.slow
def test_criterion_02_figure_reproduction(figure_run):
    m = figure_run.methods
    erm = np.mean(m["erm"].best_test_worst)
    subg = np.mean(m["subg"].best_test_worst)
    rwg_best = np.mean(m["rwg"].best_test_worst)
    rwg_final = np.mean(m["rwg"].final_test_worst)
    a = subg - erm
    b = abs(rwg_best - subg)
    c = rwg_best - rwg_final
    parts = {
        "a": a >= GAP_ERM_SUBG,
        "b": b <= BAND_RWG_SUBG,
        "c": c >= DROP_RWG_FINAL,
        "time": figure_run.seconds < FIGURE_SECONDS,
    }
    ok = all(parts.values())
    verdict = " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in parts.items())
    report(
        2,
        ok,
        f"[{verdict}] SUBG-ERM {100 * a:+.1f} pts (>= 15), |RWG-SUBG| {100 * b:.1f} pts (<= 5), "
        f"RWG best-final {100 * c:+.1f} pts (>= 5); ERM {erm:.3f} SUBG {subg:.3f} "
        f"RWG {rwg_best:.3f}/{rwg_final:.3f}; {figure_run.seconds:.0f}s",
    )
    assert ok


def test_criterion_03_core_only_separability():
    dens = lambda t: math.exp(-0.5 * ((t - 1) / 0.15) ** 2) / (0.15 * math.sqrt(2 * math.pi))
    oracle, _ = integrate.quad(dens, -np.inf, 0.0, epsabs=0, epsrel=1e-12, limit=200)
    v = core_only_error(0.15)
    in_range = 1e-12 <= v <= 1e-10
    two_sig = f"{v:.1e}" == f"{oracle:.1e}"
    ok = in_range and two_sig
    report(3, ok, f"core_only_error(0.15) = {v:.3e}, quadrature {oracle:.3e}")
    assert ok


def _mc_unique(n, k, trials, rng):
    total, done = 0, 0
    chunk = max(1, min(trials, 20_000_000 // (k + n)))
    while done < trials:
        m = min(chunk, trials - done)
        seen = np.zeros((m, n), dtype=bool)
        seen[np.arange(m)[:, None], rng.integers(0, n, size=(m, k))] = True
        total += int(seen.sum())
        done += m
    return total / trials


@pytest.mark.slow
def test_criterion_04_expected_unique_monte_carlo():
    rng = np.random.default_rng(4)
    worst, where = 0.0, None
    for n in (10, 100, 1000):
        for k in (n // 10, n, 10 * n):
            exact = expected_unique(n, k)
            rel = abs(_mc_unique(n, k, MC_TRIALS, rng) - exact) / exact
            if rel >= worst:
                worst, where = rel, (n, k)
    ok = worst < MC_REL_TOL
    report(4, ok, f"9 (n, k) cases, max relative error {worst:.2e} at n={where[0]}, k={where[1]} (tol 1%)")
    assert ok


def test_criterion_05_gradient_fidelity():
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(100):
        model, ds, batch, w = random_instance(rng, weighted=i % 2 == 1)
        gw, gb, _ = batch_gradient(model, batch, ds, w)
        weights = w if w is not None else np.full(len(batch), 1 / len(batch))
        num = fd_gradient(model, ds.features[batch], ds.signed_labels[batch], weights)
        worst = max(worst, np.linalg.norm(np.append(gw, gb) - num) / np.linalg.norm(num))
    ok = worst < GRAD_REL_TOL
    report(5, ok, f"100 instances (50 weighted), max relative error {worst:.2e} (tol 1e-6)")
    assert ok


def _max_diff(a, b):
    if not np.array_equal(a.steps, b.steps):
        return np.inf
    d = max(np.max(np.abs(a.weights - b.weights)), np.max(np.abs(a.biases - b.biases)))
    for split in a.accuracy:
        if not np.array_equal(a.accuracy[split], b.accuracy[split], equal_nan=True):
            return np.inf
    return float(d)


def test_criterion_06_degenerate_equivalences():
    ds = dataset_from_counts({(0, 0): 17, (1, 0): 23}, p=4, seed=3)
    cfg = TrainConfig(learning_rate=0.2, batch_size=6, epochs=5)
    gdro = _max_diff(
        train_erm(ds, ds, uniform(ds), cfg, 5),
        train_gdro(ds, ds, cfg, seed=5, sampler=uniform(ds), group_ids=np.zeros(len(ds), int)),
    )
    full = TrainConfig(learning_rate=0.2, epochs=30)
    gdro_full = _max_diff(
        train_erm(ds, ds, None, full, 5),
        train_gdro(ds, ds, full, seed=5, group_ids=np.zeros(len(ds), int)),
    )
    bal = dataset_from_counts({(0, 0): 8, (0, 1): 8, (1, 0): 8, (1, 1): 8}, p=3, seed=2)
    subg = _max_diff(
        train_erm(bal, bal, uniform(bal), cfg, 9), train_erm(bal, bal, subsample_groups(bal, 1), cfg, 9)
    )
    jtt1 = _max_diff(train_erm(bal, bal, None, cfg, 8), train_jtt(bal, bal, JttConfig(2, 1, cfg), 8))
    pair = build_grouped_dataset([[3.0], [-3.0]], [1, 0], [0, 0], n_classes=2, n_attributes=1)
    pcfg = TrainConfig(learning_rate=0.5, epochs=20)
    jtt_run = train_jtt(pair, pair, JttConfig(20, 50, pcfg), 1)
    jtt0 = _max_diff(train_erm(pair, pair, None, pcfg, 1), jtt_run)
    empty = jtt_run.extras["phase1_errors"].size == 0
    ok = gdro < EQUIV_TOL and gdro_full < EQUIV_TOL and subg == 0 and jtt1 == 0 and jtt0 == 0 and empty
    report(
        6,
        ok,
        f"gDRO |G|=1 vs ERM max diff {max(gdro, gdro_full):.1e}; SUBG balanced vs uniform {subg:.1e}; "
        f"JTT lambda=1 {jtt1:.1e}; JTT empty error set {jtt0:.1e}",
    )
    assert ok


def test_criterion_07_sampler_statistics():
    ds = dataset_from_counts(CELEBA)
    wb = dataset_from_counts(WATERBIRDS)
    suby = np.bincount(ds.classes[subsample_classes(ds, 0).retained_indices])
    subg = np.bincount(ds.groups[subsample_groups(ds, 0).retained_indices])
    subg_wb = np.bincount(wb.groups[subsample_groups(wb, 0).retained_indices])
    exact = len(set(suby)) == 1 and len(set(subg)) == 1 and len(set(subg_wb)) == 1
    draws = draw_batch(reweight_classes(ds), RWY_DRAWS, np.random.default_rng(7))
    f = np.mean(ds.classes[draws] == 1)
    z = abs(f - 0.5) / math.sqrt(0.25 / RWY_DRAWS)
    ok = exact and z <= 3
    report(
        7,
        ok,
        f"SUBY {suby.tolist()}, SUBG {subg.tolist()} / {subg_wb.tolist()}; "
        f"RWY blond frequency {f:.4f} ({z:.2f} binomial sd from 0.5)",
    )
    assert ok


@pytest.mark.slow
def test_criterion_08_alexander_govern():
    rng = np.random.default_rng(8)
    rate = sum(alexander_govern(list(rng.normal(size=(7, 5)))).p_value < 0.05 for _ in range(NULL_SIMS)) / NULL_SIMS
    res = alexander_govern(WORKED)
    A, p = ag_mpmath(WORKED)
    err = max(abs(res.statistic - A), abs(res.p_value - p))
    ok = NULL_RANGE[0] <= rate <= NULL_RANGE[1] and err <= AG_ORACLE_TOL
    report(8, ok, f"null rejection rate {rate:.4f} over {NULL_SIMS} sims; worked example A={res.statistic:.6f} p={res.p_value:.6g}, oracle error {err:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_09_selection_ablation_direction(toy_search_records):
    worst = aggregate(toy_search_records, SelectionCriterion.WORST_GROUP)
    avg = aggregate(toy_search_records, SelectionCriterion.AVERAGE)
    noreg = aggregate(toy_search_records, SelectionCriterion.WORST_GROUP, regularization_filter=True)
    never_exceeds = all(avg[k].mean <= worst[k].mean for k in worst)
    drops = {m: worst[(m, "toy")].mean - noreg[(m, "toy")].mean for m in ("erm", "rwg", "subg")}
    subg_smallest = all(drops["subg"] < drops[m] for m in ("erm", "rwg"))
    ok = never_exceeds and subg_smallest
    cells = ", ".join(f"{m.upper()} {worst[(m, 'toy')].mean:.1f}/{avg[(m, 'toy')].mean:.1f}" for m in ("erm", "rwg", "subg"))
    report(
        9,
        ok,
        f"worst/avg selection {cells}; no-reg drops "
        + ", ".join(f"{m.upper()} {d:+.1f}" for m, d in drops.items()),
    )
    assert ok


def test_criterion_10_published_table_fidelity():
    rows = table_rows(cells_from_csv(PUBLISHED), DATASETS)
    cells_ok = all(tuple(r[1:7]) == PUBLISHED_ROWS[r[0]][:6] for r in rows[1:])
    avg_dev = max(abs(float(r[7]) - PUBLISHED_ROWS[r[0]][6]) for r in rows[1:])
    ok = cells_ok and len(rows) == 8 and avg_dev <= AVERAGE_TOL + 1e-9
    report(10, ok, f"28 published cells rendered verbatim: {cells_ok}; last-column max deviation {avg_dev:.2f} (tol {AVERAGE_TOL})")
    assert ok
