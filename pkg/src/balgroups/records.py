"""Experiment result rows and their append-only JSONL store."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .methods import TrainedRun


def hparam_key(hparams: dict) -> str:
    return json.dumps(hparams, sort_keys=True, separators=(",", ":"))


@dataclass
class RunRecord:
    """One (method, dataset, hyper-parameters, seed) result.

    Top-level metrics are at the checkpoint chosen by validation worst-group
    accuracy. ``selections`` keeps the checkpoints chosen under the other
    protocols: ``"worst"``, ``"avg"`` (validation average accuracy) and
    ``"final"`` (last checkpoint, no early stopping).
    """

    method: str
    dataset: str
    hparams: dict
    seed: int
    best_epoch: float
    val_worst: float
    val_avg: float
    test_worst: float
    test_avg: float
    per_group_test: dict[str, float]
    wall_clock_seconds: float
    selections: dict[str, dict] = field(default_factory=dict)
    trial: int | None = None
    seed_index: int | None = None

    @property
    def key(self) -> tuple:
        return (self.method, self.dataset, hparam_key(self.hparams), self.seed)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> RunRecord:
        return cls(**d)


def _pick(run: TrainedRun, i: int) -> dict:
    return {
        "epoch": float(run.epochs[i]),
        "step": int(run.steps[i]),
        "val_worst": float(run.worst("val")[i]),
        "val_avg": float(run.average("val")[i]),
        "test_worst": float(run.worst("test")[i]),
        "test_avg": float(run.average("test")[i]),
    }


def _argmax_first(v: np.ndarray) -> int:
    return int(np.argmax(v))  # numpy returns the first maximum


def record_from_run(run: TrainedRun, dataset: str, trial=None, seed_index=None) -> RunRecord:
    """Summarize a run that was evaluated on ``val`` and ``test`` splits."""
    if "test" not in run.accuracy:
        raise ValueError("run has no test metrics")
    sel = {
        "worst": _pick(run, _argmax_first(run.worst("val"))),
        "avg": _pick(run, _argmax_first(run.average("val"))),
        "final": _pick(run, len(run) - 1),
    }
    best = _argmax_first(run.worst("val"))
    per_group = {
        f"{y}:{a}": float(run.accuracy["test"][best, g])
        for g, (y, a) in enumerate(run.group_keys)
        if run.counts["test"][g] > 0
    }
    return RunRecord(
        method=run.method,
        dataset=dataset,
        hparams=run.hparams,
        seed=run.seed,
        best_epoch=sel["worst"]["epoch"],
        val_worst=sel["worst"]["val_worst"],
        val_avg=sel["worst"]["val_avg"],
        test_worst=sel["worst"]["test_worst"],
        test_avg=sel["worst"]["test_avg"],
        per_group_test=per_group,
        wall_clock_seconds=float(run.wall_clock[-1]) if len(run.wall_clock) else 0.0,
        selections=sel,
        trial=trial,
        seed_index=seed_index,
    )


class RecordStore:
    """Append-only JSONL file of RunRecords, deduplicated by ``RunRecord.key``.

    Every append is flushed and fsynced. On load, an unterminated or
    unparsable final line (an interrupted write) is dropped.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._records: list[RunRecord] = []
        self._keys: set = set()
        if self.path.exists():
            for rec in load_records(self.path):
                if rec.key not in self._keys:
                    self._keys.add(rec.key)
                    self._records.append(rec)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key) -> bool:
        return key in self._keys

    def get(self, key) -> RunRecord | None:
        for r in self._records:
            if r.key == key:
                return r
        return None

    @property
    def records(self) -> list[RunRecord]:
        return list(self._records)

    def append(self, rec: RunRecord) -> bool:
        """Write ``rec`` unless its key is already stored. Returns True if written."""
        if rec.key in self._keys:
            return False
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._truncate_partial_tail()
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(rec.to_json() + "\n")
            f.flush()
            os.fsync(f.fileno())
        self._keys.add(rec.key)
        self._records.append(rec)
        return True

    def _truncate_partial_tail(self) -> None:
        if not self.path.exists():
            return
        data = self.path.read_bytes()
        if data and not data.endswith(b"\n"):
            cut = data.rfind(b"\n") + 1
            with open(self.path, "r+b") as f:
                f.truncate(cut)


def load_records(path) -> list[RunRecord]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    # the last element is whatever follows the final newline: either empty or
    # the remains of an interrupted append
    out = []
    for i, line in enumerate(lines[:-1]):
        if not line.strip():
            continue
        try:
            out.append(RunRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, TypeError):
            raise ValueError(f"{path}: corrupt record on line {i + 1}") from None
    return out
