"""Command-line entry point: ``balgroups <command> [options]``.

Exit status is 0 on success, 1 on a usage error and 2 on a data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from collections import defaultdict
from pathlib import Path

from . import search as search_mod
from .data import (
    CsvSchema,
    DataError,
    SyntheticConfig,
    build_grouped_dataset,
    load_csv,
    load_synthetic_config,
    write_csv,
)
from .evaluation import SelectionCriterion
from .methods import save_run, train_method
from .records import RecordStore, load_records, record_from_run
from .stats import alexander_govern
from .table import cells_from_csv, emit_table, render_csv, render_text, table_rows
from .toy import TOY_METHODS, GridSpec, run_toy, toy_hparams, toy_splits

METHOD_CHOICES = ("erm", "jtt", "gdro", "suby", "subg", "rwy", "rwg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("expected LO < HI")
    return lo, hi


def _batch(text: str):
    return None if text.lower() in ("full", "none") else int(text)


def _synthetic(args) -> SyntheticConfig:
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.config:
        return load_synthetic_config(args.config, **over)
    return SyntheticConfig(**over)


def _add_common(p, method=False, config=True):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    if config:
        p.add_argument("--config", type=Path, help="key=value synthetic data config")
    if method:
        p.add_argument("--method", choices=METHOD_CHOICES, required=True)


def _add_optim(p, defaults: dict):
    p.add_argument("--lr", type=float, default=defaults["learning_rate"])
    p.add_argument("--wd", type=float, default=defaults["weight_decay"])
    p.add_argument("--batch-size", type=_batch, default=defaults["batch_size"], help="integer or 'full'")
    p.add_argument("--epochs", type=int, default=defaults["epochs"])
    p.add_argument("--eval-every", type=int, default=defaults["eval_every"], help="in optimizer steps")
    p.add_argument("--lambda-up", type=int, default=defaults["lambda_up"])
    p.add_argument("--t-first-stage", type=int, default=defaults["t_first_stage"])
    p.add_argument("--eta", type=float, default=0.1)


def _hparams_from(args) -> dict:
    return {
        "learning_rate": args.lr,
        "weight_decay": args.wd,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "eval_every": args.eval_every,
        "lambda_up": args.lambda_up,
        "t_first_stage": args.t_first_stage,
        "eta": args.eta,
    }


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="balgroups", description="Group-robust training of linear models on toy and tabular data.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    defaults = toy_hparams()

    p = sub.add_parser("generate", help="write train/val/test CSVs of the synthetic problem")
    _add_common(p)

    p = sub.add_parser("toy", help="multi-seed toy experiment with heatmaps")
    _add_common(p)
    p.add_argument("--methods", default=",".join(TOY_METHODS), help="comma-separated")
    p.add_argument("--n-seeds", type=int, default=8)
    _add_optim(p, defaults)
    p.add_argument("--x-range", type=_range, default=GridSpec.x_range)
    p.add_argument("--y-range", type=_range, default=GridSpec.y_range)
    p.add_argument("--nx", type=int, default=GridSpec.nx)
    p.add_argument("--ny", type=int, default=GridSpec.ny)

    p = sub.add_parser("train", help="single training run")
    _add_common(p, method=True)
    p.add_argument("--train", type=Path, help="training CSV (otherwise synthetic)")
    p.add_argument("--val", type=Path)
    p.add_argument("--test", type=Path)
    p.add_argument("--class-column", default="y")
    p.add_argument("--attribute-column", default="a")
    _add_optim(p, defaults)

    p = sub.add_parser("search", help="random hyper-parameter search on synthetic data")
    _add_common(p)
    p.add_argument("--method", action="append", choices=METHOD_CHOICES, help="repeatable; default all")
    p.add_argument("--n-trials", type=int, default=None)
    p.add_argument("--n-seeds", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dataset", default="toy")

    p = sub.add_parser("table", help="results table from JSONL records")
    p.add_argument("--input", type=Path, required=True, help="records.jsonl, or a cells CSV with --cells")
    p.add_argument("--cells", action="store_true", help="input holds method,dataset,mean,std rows")
    p.add_argument("--out", type=Path)
    p.add_argument("--select", choices=[c.value for c in SelectionCriterion], default="worst")
    p.add_argument("--no-reg", action="store_true", help="only weight decay 1e-4, final checkpoint")
    p.add_argument("--flags", action="store_true", help="mark significant blocks with '*'")

    p = sub.add_parser("stats", help="significance tests")
    p.add_argument("test", choices=["ag"])
    p.add_argument("--input", type=Path, required=True, help="CSV with group,value rows")
    return ap


# --- commands ------------------------------------------------------------------------


def cmd_generate(args) -> None:
    cfg = _synthetic(args)
    args.out.mkdir(parents=True, exist_ok=True)
    names = ["x_spu", "x_core", *(f"noise_{j}" for j in range(cfg.d))]
    for name, ds in zip(("train", "val", "test"), toy_splits(cfg)):
        write_csv(ds, args.out / f"{name}.csv", names)


def cmd_toy(args) -> None:
    cfg = _synthetic(args)
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHOD_CHOICES]
    if bad or not methods:
        raise UsageError(f"unknown methods: {bad}")
    if args.n_seeds < 1:
        raise UsageError("--n-seeds must be positive")
    grid = GridSpec(args.x_range, args.y_range, args.nx, args.ny)
    res = run_toy(cfg, methods, args.n_seeds, _hparams_from(args), grid)
    res.write(args.out)
    print((args.out / "metrics_summary.csv").read_text(encoding="utf-8"), end="")


def cmd_train(args) -> None:
    hp = _hparams_from(args)
    seed = 0 if args.seed is None else args.seed
    if args.train is not None:
        if args.val is None:
            raise UsageError("--val is required with --train")
        schema = CsvSchema(args.class_column, args.attribute_column)
        train, maps = load_csv(args.train, schema)
        val = _load_aligned(args.val, schema, maps, train)
        test = _load_aligned(args.test, schema, maps, train) if args.test else None
    else:
        train, val, test = toy_splits(_synthetic(args))
    run = train_method(args.method, train, val, hp, seed, test)
    save_run(run, args.out)
    rec = record_from_run(run, str(args.train or "toy"))
    print(json.dumps(rec.selections["worst"], sort_keys=True))


def _load_aligned(path, schema, maps, train):
    """Load a split with class/attribute ids consistent with the training split."""
    ds, m = load_csv(path, schema)
    for key in ("classes", "attributes"):
        extra = set(m[key]) - set(maps[key])
        if extra:
            raise DataError(f"{path}: {key} tokens not in training split: {sorted(extra)}")
    inv_c = {v: k for k, v in m["classes"].items()}
    inv_a = {v: k for k, v in m["attributes"].items()}
    classes = [maps["classes"][inv_c[int(c)]] for c in ds.classes]
    attrs = [maps["attributes"][inv_a[int(a)]] for a in ds.attributes]
    return build_grouped_dataset(ds.features, classes, attrs, train.n_classes, train.n_attributes)


def cmd_search(args) -> None:
    cfg = _synthetic(args)
    over = {k: v for k, v in (("n_trials", args.n_trials), ("n_seeds", args.n_seeds), ("epochs", args.epochs)) if v is not None}
    space = search_mod.toy_search_space(**over)
    data = toy_splits(cfg)
    store = RecordStore(args.out / "records.jsonl")
    master = 0 if args.seed is None else args.seed
    for m in args.method or METHOD_CHOICES:
        recs = search_mod.random_search(space, data, m, master, args.dataset, store, args.workers)
        print(f"{m}: {len(recs)} records")


def cmd_table(args) -> None:
    if args.cells:
        cells = cells_from_csv(args.input.read_text(encoding="utf-8"))
        if not cells:
            raise DataError("no cells in input")
        rows = table_rows(cells, _dataset_order(args.input))
        csv_text, text = render_csv(rows), render_text(rows)
    else:
        records = load_records(args.input)
        if not records:
            raise DataError("no records in input")
        cells, csv_text, text = emit_table(records, args.select, args.no_reg, None, args.flags)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "table.csv").write_text(csv_text, encoding="utf-8")
        (args.out / "table.txt").write_text(text, encoding="utf-8")
    print(text, end="")


def _dataset_order(path) -> list[str]:
    seen = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            if row["dataset"] not in seen:
                seen.append(row["dataset"])
    return seen


def cmd_stats(args) -> None:
    groups = defaultdict(list)
    with open(args.input, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"group", "value"} <= set(reader.fieldnames):
            raise DataError("expected a header with group,value columns")
        for row in reader:
            try:
                groups[row["group"]].append(float(row["value"]))
            except (TypeError, ValueError):
                raise DataError(f"non-numeric value {row['value']!r}") from None
    res = alexander_govern(list(groups.values()))
    print("A,p,df")
    print(f"{res.statistic!r},{res.p_value!r},{res.df}")


COMMANDS = {
    "generate": cmd_generate,
    "toy": cmd_toy,
    "train": cmd_train,
    "search": cmd_search,
    "table": cmd_table,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except UsageError as e:
        print(f"balgroups: error: {e}", file=sys.stderr)
        return 1
    except (DataError, ValueError, KeyError, OSError) as e:
        print(f"balgroups: data error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
