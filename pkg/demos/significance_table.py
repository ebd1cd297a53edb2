"""From search records to a flagged results table.

Runs a short random search for a few methods on the toy problem, builds
the worst-group table with and without the regularization filter, and
marks blocks where the Alexander-Govern test finds the methods differ.

    python3 demos/significance_table.py --out search_out
"""

import argparse
from pathlib import Path

from balgroups import SyntheticConfig
from balgroups.records import RecordStore
from balgroups.search import random_search, toy_search_space
from balgroups.stats import alexander_govern
from balgroups.table import emit_table
from balgroups.toy import toy_splits


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("search_out"))
    ap.add_argument("--n-trials", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=300)
    args = ap.parse_args()

    data = toy_splits(SyntheticConfig(d=200, n_test=2000))
    space = toy_search_space(n_trials=args.n_trials, epochs=args.epochs)
    store = RecordStore(args.out / "records.jsonl")
    records = []
    for m in ("erm", "rwg", "subg", "gdro"):
        # the store makes reruns resume instead of retraining
        records += random_search(space, data, m, 0, "toy", store)

    cells, _, text = emit_table(records, "worst", with_flags=True)
    print("validation worst-group selection ('*': AG p < 0.05 within block)")
    print(text)
    _, _, text = emit_table(records, "worst", regularization_filter=True)
    print("weight decay 1e-4, final checkpoint")
    print(text)

    seeds = [list(c.samples) for (m, _), c in sorted(cells.items()) if m in ("rwg", "subg", "gdro")]
    res = alexander_govern(seeds)
    print(f"attribute-using methods: A={res.statistic:.3f} df={res.df} p={res.p_value:.3g}")


if __name__ == "__main__":
    main()
