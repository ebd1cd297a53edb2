"""How much of the majority does each balancing scheme actually see?

Builds a dataset with CelebA-sized group counts, shows the per-group
composition of what each sampler draws, and compares the expected number
of distinct majority examples seen under resampling with the fixed
coverage of subsampling.

    python3 demos/sampler_coverage.py
"""

import numpy as np

from balgroups import build_grouped_dataset
from balgroups.balancing import draw_batch, expected_unique, make_sampler

COUNTS = {(0, 0): 71629, (0, 1): 66874, (1, 0): 22880, (1, 1): 1387}


def dataset(counts):
    classes, attrs = [], []
    for (y, a), c in counts.items():
        classes += [y] * c
        attrs += [a] * c
    x = np.zeros((len(classes), 1))
    return build_grouped_dataset(x, classes, attrs, n_classes=2, n_attributes=2)


def main():
    ds = dataset(COUNTS)
    rng = np.random.default_rng(0)
    print("share of each group in 100k draws (groups are class*2 + attribute)")
    for kind in ("uniform", "suby", "subg", "rwy", "rwg"):
        spec = make_sampler(kind, ds, seed=0)
        idx = draw_batch(spec, 100_000, rng)
        share = np.bincount(ds.groups[idx], minlength=4) / len(idx)
        print(f"  {kind:<8}" + "".join(f"{s:8.3f}" for s in share))

    # Under group reweighting each group gets a quarter of the draws, so a
    # majority group sees roughly k = N / 4 draws per pass over N examples.
    n_min = min(COUNTS.values())
    print("\nmajority coverage per 'epoch' of k draws from a group of size n")
    for n in (22880, 66874, 71629):
        for k in (n_min, sum(COUNTS.values()) // 4, n):
            e = expected_unique(n, k)
            print(f"  n={n:6d} k={k:6d}  E[distinct]={e:9.1f}  ({e / n:6.1%} of the group)")
    print(f"\nsubsampling keeps exactly {n_min} per group, every epoch the same rows")


if __name__ == "__main__":
    main()
