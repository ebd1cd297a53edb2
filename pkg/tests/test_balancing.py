import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from balgroups.balancing import (
    SamplerKind,
    SamplerSpec,
    draw_batch,
    epoch_batches,
    expected_unique,
    make_sampler,
    reweight_classes,
    reweight_groups,
    subsample_classes,
    subsample_groups,
    uniform,
)
from balgroups.data import DataError, build_grouped_dataset
from conftest import CELEBA, WATERBIRDS, dataset_from_counts


def test_suby_celeba(celeba_ds):
    s = subsample_classes(celeba_ds, seed=1)
    kept = celeba_ds.classes[s.retained_indices]
    assert np.bincount(kept).tolist() == [24267, 24267]
    assert len(s.retained_indices) == 48534


def test_subg_celeba_and_waterbirds(celeba_ds):
    s = subsample_groups(celeba_ds, seed=1)
    assert np.bincount(celeba_ds.groups[s.retained_indices]).tolist() == [1387] * 4
    wb = dataset_from_counts(WATERBIRDS)
    s = subsample_groups(wb, seed=1)
    assert len(s.retained_indices) == 224
    assert np.bincount(wb.groups[s.retained_indices]).tolist() == [56] * 4


def test_subsampling_determinism_and_identity():
    ds = dataset_from_counts({(0, 0): 30, (0, 1): 7, (1, 0): 12, (1, 1): 9})
    a, b = subsample_groups(ds, 5), subsample_groups(ds, 5)
    assert np.array_equal(a.retained_indices, b.retained_indices)
    assert not np.array_equal(a.retained_indices, subsample_groups(ds, 6).retained_indices)
    bal = dataset_from_counts({(0, 0): 4, (0, 1): 4, (1, 0): 4, (1, 1): 4})
    assert subsample_groups(bal, 3).retained_indices.tolist() == list(range(16))
    assert subsample_classes(bal, 3).retained_indices.tolist() == list(range(16))


def test_subsampling_errors():
    ds = build_grouped_dataset(np.zeros((3, 1)), [0, 0, 1], [0, 0, 0], n_classes=2, n_attributes=2)
    with pytest.raises(DataError):
        subsample_groups(ds, 0)
    one = build_grouped_dataset(np.zeros((2, 1)), [0, 0], [0, 1])
    with pytest.raises(DataError):
        subsample_classes(one, 0)


def test_rwy_celeba_ratio(celeba_ds):
    s = reweight_classes(celeba_ds)
    blond = s.weights[celeba_ds.classes == 1][0]
    other = s.weights[celeba_ds.classes == 0][0]
    assert blond / other == pytest.approx(138503 / 24267, rel=1e-12)
    assert blond / other == pytest.approx(5.707, abs=5e-4)


def test_rwg_celeba_ratio(celeba_ds):
    s = reweight_groups(celeba_ds)
    minority = s.weights[celeba_ds.group_index[(1, 1)][0]]
    majority = s.weights[celeba_ds.group_index[(0, 0)][0]]
    assert minority / majority == pytest.approx(71629 / 1387, rel=1e-12)


def test_reweighting_small_cases():
    ds = dataset_from_counts({(0, 0): 1, (1, 0): 9})
    s = reweight_classes(ds)
    mass = [s.weights[ds.classes == y].sum() for y in (0, 1)]
    assert mass == pytest.approx([0.5, 0.5], abs=1e-15)
    bal = dataset_from_counts({(0, 0): 3, (1, 0): 3})
    assert np.allclose(reweight_classes(bal).weights, 1 / 6)
    single = dataset_from_counts({(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): 1})
    assert np.allclose(reweight_groups(single).weights, 0.25)


counts_st = st.dictionaries(
    st.tuples(st.integers(0, 2), st.integers(0, 1)), st.integers(1, 50), min_size=2
).filter(lambda d: len({y for y, _ in d}) >= 2)


def _dense(counts):
    # make class/attribute ids dense so the dataset builds without explicit sizes
    ys = sorted({y for y, _ in counts})
    as_ = sorted({a for _, a in counts})
    return {(ys.index(y), as_.index(a)): c for (y, a), c in counts.items()}


@settings(max_examples=60, deadline=None)
@given(counts_st, st.integers(0, 2**31))
def test_sampler_invariants(counts, seed):
    counts = _dense(counts)
    ds = build_grouped_dataset(
        np.zeros((sum(counts.values()), 1)),
        [y for (y, a), c in sorted(counts.items()) for _ in range(c)],
        [a for (y, a), c in sorted(counts.items()) for _ in range(c)],
        n_classes=1 + max(y for y, _ in counts),
        n_attributes=1 + max(a for _, a in counts),
    )
    y_counts = np.bincount(ds.classes[subsample_classes(ds, seed).retained_indices])
    assert len(set(y_counts.tolist())) == 1
    rwy = reweight_classes(ds)
    assert rwy.weights.sum() == pytest.approx(1.0, abs=1e-12)
    for y in range(ds.n_classes):
        w = rwy.weights[ds.classes == y]
        assert w.sum() == pytest.approx(1 / ds.n_classes, abs=1e-12)
        assert np.all(w == w[0])
    if (ds.group_counts() > 0).all():
        g_counts = np.bincount(ds.groups[subsample_groups(ds, seed).retained_indices])
        assert len(set(g_counts.tolist())) == 1
        rwg = reweight_groups(ds)
        for g in range(ds.n_groups):
            assert rwg.weights[ds.groups == g].sum() == pytest.approx(1 / ds.n_groups, abs=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        SamplerSpec(SamplerKind.SUBG, 4)
    with pytest.raises(ValueError):
        SamplerSpec(SamplerKind.RWY, 2, weights=np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        SamplerSpec(SamplerKind.SUBY, 4, retained_indices=np.array([1, 1]))
    with pytest.raises(ValueError):
        SamplerSpec(SamplerKind.UNIFORM, 3, weights=np.ones(3) / 3)


# --- drawing ------------------------------------------------------------------------


def test_uniform_draw_frequencies():
    ds = dataset_from_counts({(0, 0): 1, (1, 0): 1})
    spec = uniform(ds)
    rng = np.random.default_rng(0)
    draws = np.concatenate([draw_batch(spec, 1, rng) for _ in range(20000)])
    f = np.mean(draws == 0)
    assert abs(f - 0.5) <= 3 * math.sqrt(0.25 / 20000)


def test_weighted_draws_follow_weights():
    spec = SamplerSpec(SamplerKind.RWY, 2, weights=np.array([0.9, 0.1]))
    rng = np.random.default_rng(1)
    draws = draw_batch(spec, 100000, rng)
    assert abs(np.mean(draws == 0) - 0.9) <= 3 * math.sqrt(0.09 / 100000)


def test_rwy_celeba_draws_balanced(celeba_ds):
    spec = reweight_classes(celeba_ds)
    n = 10**5
    draws = draw_batch(spec, n, np.random.default_rng(2))
    f = np.mean(celeba_ds.classes[draws] == 1)
    assert abs(f - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_draw_determinism_and_errors(small_ds):
    spec = reweight_groups(small_ds)
    a = draw_batch(spec, 16, np.random.default_rng(3))
    b = draw_batch(spec, 16, np.random.default_rng(3))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        draw_batch(spec, 0, np.random.default_rng(3))


def test_epoch_batches_cover_pool_without_replacement(small_ds):
    spec = subsample_groups(small_ds, 0)
    batches = epoch_batches(spec, 3, np.random.default_rng(0))
    flat = np.concatenate(batches)
    assert len(batches) == math.ceil(len(spec.pool) / 3)
    assert sorted(flat.tolist()) == spec.pool.tolist()


def test_epoch_batches_reweighted_and_full(small_ds):
    spec = reweight_groups(small_ds)
    batches = epoch_batches(spec, 7, np.random.default_rng(0))
    assert len(batches) == math.ceil(len(small_ds) / 7)
    assert all(len(b) == 7 for b in batches)
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    full = epoch_batches(spec, None, rng)
    assert len(full) == 1 and full[0].tolist() == list(range(len(small_ds)))
    assert rng.bit_generator.state == state


def test_make_sampler_dispatch(small_ds):
    for kind in SamplerKind:
        assert make_sampler(kind.value, small_ds, 1).kind is kind


# --- coverage formula --------------------------------------------------------------


def test_expected_unique_examples():
    assert expected_unique(10, 0) == 0
    assert expected_unique(1, 5) == 1
    assert expected_unique(100, 100) == pytest.approx(63.397, abs=5e-4)


def _monte_carlo_unique(n, k, trials, rng):
    # number of distinct values among k uniform draws, averaged over trials
    total = 0
    chunk = max(1, 2_000_000 // max(k, 1))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        draws = rng.integers(0, n, size=(m, k))
        draws.sort(axis=1)
        total += int((1 + (np.diff(draws, axis=1) != 0).sum(axis=1)).sum())
        done += m
    return total / trials


def test_expected_unique_monte_carlo_n100():
    mc = _monte_carlo_unique(100, 100, 10**5, np.random.default_rng(0))
    assert mc == pytest.approx(63.397, abs=0.05)


@given(st.integers(1, 10**6), st.integers(0, 10**7), st.integers(0, 10**7))
def test_expected_unique_monotone_bounded(n, k1, k2):
    lo, hi = sorted((k1, k2))
    assert expected_unique(n, lo) <= expected_unique(n, hi) + 1e-9
    assert expected_unique(n, hi) <= min(n, hi) + 1e-9
