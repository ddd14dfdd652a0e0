"""Evaluation results: per-cell accuracies, aggregates, significance and file output."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..errors import AllZeroDifferences, InvalidConfig, IoFailure, MissingFile, TooFewPairs
from .stats import wilcoxon_signed_rank

CSV_COLUMNS = ("task", "scheme", "target_subject", "n_calib", "n_sources", "repeat", "accuracy", "seconds")
FORMATS = ("csv", "jsonl")


class Cell(NamedTuple):
    task: str
    scheme: str
    target_subject: str
    n_calib: int
    n_sources: int
    repeat: int
    accuracy: float
    seconds: float


class FoldError(NamedTuple):
    task: str
    target_subject: str
    n_calib: int
    n_sources: int
    repeat: int
    scheme: str
    error: str
    category: str
    message: str


def _condition_key(cell) -> tuple:
    return (cell.n_calib, cell.n_sources)


@dataclass
class EvaluationReport:
    task: str
    schemes: tuple
    cells: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    hygiene_checks: int = 0

    def conditions(self) -> list:
        """Distinct ``(n_calib, n_sources)`` settings, sorted."""
        return sorted({_condition_key(c) for c in self.cells})

    def select(self, scheme=None, n_calib=None, n_sources=None) -> list:
        return [
            c for c in self.cells
            if (scheme is None or c.scheme == scheme)
            and (n_calib is None or c.n_calib == n_calib)
            and (n_sources is None or c.n_sources == n_sources)
        ]

    def mean_accuracy(self, scheme, n_calib=None, n_sources=None) -> float:
        cells = self.select(scheme, n_calib, n_sources)
        return float(np.mean([c.accuracy for c in cells])) if cells else float("nan")

    def subject_means(self, scheme, n_calib=None, n_sources=None) -> dict:
        """Mean accuracy over repeats for each target subject."""
        acc: dict = {}
        for c in self.select(scheme, n_calib, n_sources):
            acc.setdefault(c.target_subject, []).append(c.accuracy)
        return {s: float(np.mean(v)) for s, v in sorted(acc.items())}

    def aggregates(self) -> list:
        """Mean and (population) standard deviation per scheme and condition."""
        rows = []
        for n_calib, n_sources in self.conditions():
            for scheme in self.schemes:
                values = [c.accuracy for c in self.select(scheme, n_calib, n_sources)]
                if not values:
                    continue
                rows.append({
                    "scheme": scheme, "n_calib": n_calib, "n_sources": n_sources,
                    "mean": float(np.mean(values)), "std": float(np.std(values)), "n": len(values),
                })
        return rows

    def significance(self, reference: str = "dan") -> list:
        """Wilcoxon tests of ``reference`` against every other scheme on per-subject means.

        Conditions where the test is undefined carry ``pvalue=None`` and the
        reason in ``note``.
        """
        rows = []
        if reference not in self.schemes:
            return rows
        for n_calib, n_sources in self.conditions():
            ref = self.subject_means(reference, n_calib, n_sources)
            for scheme in self.schemes:
                if scheme == reference:
                    continue
                other = self.subject_means(scheme, n_calib, n_sources)
                common = sorted(set(ref) & set(other))
                row = {"reference": reference, "scheme": scheme, "n_calib": n_calib, "n_sources": n_sources,
                       "n_subjects": len(common), "statistic": None, "pvalue": None, "exact": None, "note": ""}
                try:
                    res = wilcoxon_signed_rank([ref[s] for s in common], [other[s] for s in common])
                    row.update(statistic=res.statistic, pvalue=res.pvalue, exact=res.exact)
                except (TooFewPairs, AllZeroDifferences) as exc:
                    row["note"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
        return rows

    def sub_reports(self, key: str) -> dict:
        """Split by ``n_calib`` or ``n_sources``."""
        if key not in ("n_calib", "n_sources"):
            raise InvalidConfig(f"cannot split a report by {key!r}", field="key")
        out = {}
        for value in sorted({getattr(c, key) for c in self.cells} | {getattr(e, key) for e in self.errors}):
            out[value] = EvaluationReport(
                task=self.task, schemes=self.schemes,
                cells=[c for c in self.cells if getattr(c, key) == value],
                errors=[e for e in self.errors if getattr(e, key) == value],
                config=self.config, hygiene_checks=self.hygiene_checks,
            )
        return out

    def to_manifest(self) -> dict:
        return {
            "task": self.task,
            "schemes": list(self.schemes),
            "config": self.config,
            "n_cells": len(self.cells),
            "aggregates": self.aggregates(),
            "significance": self.significance(),
            "errors": [e._asdict() for e in self.errors],
            "hygiene_checks": self.hygiene_checks,
        }


def _cell_dict(cell: Cell) -> dict:
    d = cell._asdict()
    d["accuracy"] = float(d["accuracy"])
    d["seconds"] = float(d["seconds"])
    return d


def format_report(report: EvaluationReport, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for c in report.cells:
            writer.writerow([c.task, c.scheme, c.target_subject, c.n_calib, c.n_sources, c.repeat,
                             repr(float(c.accuracy)), repr(float(c.seconds))])
        return buf.getvalue()
    if fmt == "jsonl":
        return "".join(json.dumps(_cell_dict(c), sort_keys=True) + "\n" for c in report.cells)
    raise InvalidConfig(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}", field="format")


def emit_report(report: EvaluationReport, path, fmt: str = "csv") -> None:
    text = format_report(report, fmt)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_run_manifest(report: EvaluationReport, path) -> None:
    try:
        Path(path).write_text(json.dumps(report.to_manifest(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_cells(path) -> list:
    """Load cells back from a CSV or JSON-lines report (chosen by suffix)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"{path} does not exist")
    text = path.read_text()
    if path.suffix == ".jsonl":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        rows = list(csv.DictReader(io.StringIO(text)))
    return [
        Cell(r["task"], r["scheme"], r["target_subject"], int(r["n_calib"]), int(r["n_sources"]),
             int(r["repeat"]), float(r["accuracy"]), float(r["seconds"]))
        for r in rows
    ]
