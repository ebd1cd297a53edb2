import numpy as np
import pytest

from balgroups.data import build_grouped_dataset

# Group counts of four public worst-group benchmarks, keyed (class, attribute).
CELEBA = {(1, 0): 22880, (1, 1): 1387, (0, 0): 71629, (0, 1): 66874}
WATERBIRDS = {(0, 0): 56, (0, 1): 1057, (1, 0): 3498, (1, 1): 184}
CIVILCOMMENTS = {(0, 0): 90337, (0, 1): 148186, (1, 0): 17784, (1, 1): 12731}
MULTINLI = {
    (0, 0): 57498, (0, 1): 11158,
    (1, 0): 67376, (1, 1): 1521,
    (2, 0): 66630, (2, 1): 1992,
}


def dataset_from_counts(counts, p=1, seed=0):
    """Synthetic dataset with the given (class, attribute) counts and random features."""
    ys, attrs = [], []
    for (y, a), c in sorted(counts.items()):
        ys.extend([y] * c)
        attrs.extend([a] * c)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(len(ys), p))
    return build_grouped_dataset(x, ys, attrs)


@pytest.fixture(scope="session")
def celeba_ds():
    return dataset_from_counts(CELEBA)


@pytest.fixture
def small_ds():
    rng = np.random.default_rng(7)
    n = 40
    y = np.array([0] * 20 + [1] * 20)
    a = np.array(([0] * 15 + [1] * 5) * 2)
    x = rng.normal(size=(n, 3)) + (2 * y - 1)[:, None] * 0.5
    return build_grouped_dataset(x, y, a)


# --- shared end-to-end runs (slow; computed once per session) ---------------------


@pytest.fixture(scope="session")
def figure_run():
    """Default toy problem, 8 seeds, default full-batch schedule.

    ERM, SUBG and RWG are timed together; group DRO is trained separately
    and merged in afterwards.
    """
    import time

    from balgroups.data import SyntheticConfig
    from balgroups.toy import run_toy

    t0 = time.perf_counter()
    res = run_toy(SyntheticConfig(), methods=("erm", "subg", "rwg"), n_seeds=8, keep_runs=False)
    res.seconds = time.perf_counter() - t0
    extra = run_toy(SyntheticConfig(), methods=("gdro",), n_seeds=8, grid=None, keep_runs=False)
    res.methods.update(extra.methods)
    return res


@pytest.fixture(scope="session")
def toy_search_records():
    from balgroups.data import SyntheticConfig
    from balgroups.search import random_search, toy_search_space
    from balgroups.toy import toy_splits

    data = toy_splits(SyntheticConfig())
    space = toy_search_space()
    recs = []
    for m in ("erm", "rwg", "subg"):
        recs += random_search(space, data, m, master_seed=0)
    return recs


# --- acceptance report ------------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
