"""Results tables: per-cell model selection, mean/std across seeds, rendering."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass

from .evaluation import SelectionCriterion, summarize_seeds
from .records import RunRecord, hparam_key
from .stats import alexander_govern

# Row order and metadata: tuned hyper-parameter count, uses attribute labels.
METHOD_INFO = {
    "erm": ("ERM", 4, False),
    "jtt": ("JTT", 6, False),
    "rwy": ("RWY", 4, False),
    "suby": ("SUBY", 4, False),
    "rwg": ("RWG", 4, True),
    "subg": ("SUBG", 4, True),
    "gdro": ("gDRO", 5, True),
}

WEAK_WEIGHT_DECAY = 1e-4
AVERAGE_COLUMN = "Average (of worst)"


@dataclass(frozen=True)
class Cell:
    mean: float
    std: float
    n: int
    hparams: dict | None = None
    samples: tuple = ()

    def text(self) -> str:
        return f"{self.mean:.1f}±{self.std:.1f}"


def aggregate(
    records: list[RunRecord],
    selection=SelectionCriterion.WORST_GROUP,
    regularization_filter: bool = False,
) -> dict[tuple[str, str], Cell]:
    """Pick one hyper-parameter assignment per (method, dataset) cell.

    Each assignment is scored by the mean over its seeds of the validation
    criterion at the checkpoint that criterion selects; the best-scoring
    assignment reports mean and std of test worst-group accuracy (in
    percent). With ``regularization_filter`` only assignments with weight
    decay 1e-4 compete, evaluated at their final checkpoint.
    """
    selection = SelectionCriterion(selection)
    mode = "final" if regularization_filter else selection.value
    val_field = "val_worst" if selection is SelectionCriterion.WORST_GROUP else "val_avg"

    by_cell: dict = defaultdict(lambda: defaultdict(list))
    for r in records:
        if regularization_filter and not math.isclose(
            r.hparams.get("weight_decay", math.nan), WEAK_WEIGHT_DECAY, rel_tol=1e-9
        ):
            continue
        by_cell[(r.method, r.dataset)][hparam_key(r.hparams)].append(r)

    cells = {}
    for cell_key, assignments in by_cell.items():
        best = None
        for hk in sorted(assignments):
            recs = assignments[hk]
            score = sum(r.selections[mode][val_field] for r in recs) / len(recs)
            if best is None or score > best[0]:
                best = (score, recs)
        recs = sorted(best[1], key=lambda r: r.seed)
        tw = [100.0 * r.selections[mode]["test_worst"] for r in recs]
        m, s = summarize_seeds(tw)
        cells[cell_key] = Cell(m, s, len(tw), recs[0].hparams, tuple(tw))
    return cells


def significance(cells: dict, alpha: float = 0.05) -> dict[tuple[str, bool], bool | None]:
    """Alexander-Govern flag per (dataset, uses attributes) block of methods.

    ``None`` when a block has fewer than two methods or a method's seeds are
    too few or constant for the test.
    """
    blocks = defaultdict(dict)
    for (method, dataset), cell in cells.items():
        uses = METHOD_INFO.get(method, (method, 0, False))[2]
        blocks[(dataset, uses)][method] = cell.samples
    out = {}
    for key, per_method in blocks.items():
        try:
            res = alexander_govern(list(per_method.values())) if len(per_method) > 1 else None
        except ValueError:
            res = None
        out[key] = None if res is None else res.p_value < alpha
    return out


def _ordered_methods(cells) -> list[str]:
    present = {m for m, _ in cells}
    known = [m for m in METHOD_INFO if m in present]
    return known + sorted(present - set(known))


def _ordered_datasets(cells, datasets=None) -> list[str]:
    if datasets is not None:
        return list(datasets)
    return sorted({d for _, d in cells})


def table_rows(cells: dict, datasets=None, flags=None) -> list[list[str]]:
    """Header plus one row per method; the last column averages the
    worst-group means across datasets."""
    datasets = _ordered_datasets(cells, datasets)
    header = ["Method", "#HP", "Groups", *datasets, AVERAGE_COLUMN]
    rows = [header]
    for m in _ordered_methods(cells):
        name, hp, uses = METHOD_INFO.get(m, (m, "", None))
        row = [name, str(hp), {True: "Yes", False: "No", None: ""}[uses]]
        means = []
        for d in datasets:
            c = cells.get((m, d))
            if c is None:
                row.append("")
                continue
            t = c.text()
            if flags and flags.get((d, uses)):
                t += "*"
            row.append(t)
            means.append(c.mean)
        row.append(f"{sum(means) / len(means):.1f}" if means and len(means) == len(datasets) else "")
        rows.append(row)
    return rows


def render_csv(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def render_text(rows: list[list[str]]) -> str:
    widths = [max(len(r[j]) for r in rows) for j in range(len(rows[0]))]
    lines = []
    for i, r in enumerate(rows):
        lines.append("  ".join(c.ljust(w) if j < 3 else c.rjust(w) for j, (c, w) in enumerate(zip(r, widths))).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def emit_table(
    records: list[RunRecord],
    selection=SelectionCriterion.WORST_GROUP,
    regularization_filter: bool = False,
    datasets=None,
    with_flags: bool = False,
):
    """Aggregate records and render them. Returns ``(cells, csv_text, aligned_text)``."""
    cells = aggregate(records, selection, regularization_filter)
    if not cells:
        raise ValueError("no records to tabulate")
    flags = significance(cells) if with_flags else None
    rows = table_rows(cells, datasets, flags)
    return cells, render_csv(rows), render_text(rows)


def cells_from_csv(text: str) -> dict[tuple[str, str], Cell]:
    """Read pre-aggregated cells from ``method,dataset,mean,std`` rows
    (e.g. values transcribed from a published table)."""
    cells = {}
    for row in csv.DictReader(io.StringIO(text)):
        cells[(row["method"].strip().lower(), row["dataset"].strip())] = Cell(
            float(row["mean"]), float(row["std"]), int(row.get("n") or 0)
        )
    return cells
