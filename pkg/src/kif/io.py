"""CSV ingestion and TSV/JSON writers.

Input CSV: header row, one label column selected by name, every other cell a
finite real. Screening TSV: ``rank, feature_j, feature_l, kif_score``.
Permutation TSV: ``feature_j, feature_l, kif_score, p_value``. Scores are
written with 17 significant digits, p-values (multiples of 1/T) in shortest
round-trip form; both parse back to the identical double.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .engine import Dataset, ScreeningResult


class DataError(ValueError):
    """Malformed or missing input data."""


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def load_csv(path, label_col: str, delimiter: str = ",") -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_col not in header:
            raise DataError(f"{path}: label column {label_col!r} not in header")
        li = header.index(label_col)
        names = [h for i, h in enumerate(header) if i != li]
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            vals = []
            for i, cell in enumerate(rec):
                if i == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {header[i]!r}: cannot parse {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: column {header[i]!r}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
            labels.append(rec[li])
    if not rows:
        raise DataError(f"{path}: no data rows")
    try:
        return Dataset(np.array(rows, dtype=np.float64).reshape(len(rows), len(names)), tuple(labels), tuple(names))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_csv(data: Dataset, dest, label_col: str = "y", delimiter: str = ",") -> None:
    """Export in the format :func:`load_csv` reads; ``dest`` is a path or an open text file."""
    if label_col in data.feature_names:
        raise ValueError(f"label column name {label_col!r} clashes with a feature name")
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            return write_csv(data, fh, label_col, delimiter)
    w = csv.writer(dest, delimiter=delimiter, lineterminator="\n")
    w.writerow([*data.feature_names, label_col])
    for row, lab in zip(data.features, data.labels):
        w.writerow([repr(float(v)) for v in row] + [lab])


def result_rows(result: ScreeningResult, all_pairs: bool = False):
    names = result.feature_names
    k = len(result) if all_pairs else result.n_selected
    for r in range(k):
        j, l = int(result.j[r]), int(result.l[r])
        yield r + 1, names[j], names[l], float(result.scores[r])


def write_screen_tsv(result: ScreeningResult, fh, all_pairs: bool = False) -> None:
    fh.write("rank\tfeature_j\tfeature_l\tkif_score\n")
    for rank, a, b, s in result_rows(result, all_pairs):
        fh.write(f"{rank}\t{a}\t{b}\t{fmt(s)}\n")


def screen_json(result: ScreeningResult, all_pairs: bool = False, timings: bool = False) -> dict:
    def entries(k):
        return [
            {"rank": r + 1, "j": int(result.j[r]), "l": int(result.l[r]),
             "feature_j": result.feature_names[result.j[r]], "feature_l": result.feature_names[result.l[r]],
             "kif_score": float(result.scores[r])}
            for r in range(k)
        ]

    doc = {
        "version": __version__,
        "config": result.config.as_dict(),
        "n": result.n,
        "p": len(result.feature_names),
        "n_pairs": result.n_pairs,
        "n_selected": result.n_selected,
        "cutoff": result.cutoff,
        "skipped_classes": [str(c) for c in result.skipped_classes],
        "selected": entries(result.n_selected),
    }
    if all_pairs:
        doc["ranking"] = entries(len(result))
    if timings:
        doc["timings"] = result.timings
    return doc


def write_json(doc: dict, fh) -> None:
    json.dump(doc, fh, indent=2, sort_keys=False)
    fh.write("\n")


def read_pairs(path, names: tuple, top: Optional[int] = None) -> list:
    """Pairs from a TSV with ``feature_j``/``feature_l`` columns (a screening TSV works).

    Names are resolved against ``names``; returns 0-based (j, l) with j < l.
    """
    index = {nm: i for i, nm in enumerate(names)}
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if not reader.fieldnames or not {"feature_j", "feature_l"} <= set(reader.fieldnames):
            raise DataError(f"{path}: need feature_j and feature_l columns")
        pairs = []
        for lineno, rec in enumerate(reader, start=2):
            if top is not None and len(pairs) >= top:
                break
            a, b = rec["feature_j"], rec["feature_l"]
            for nm in (a, b):
                if nm not in index:
                    raise KeyError(f"{path}:{lineno}: unknown feature {nm!r}")
            j, l = sorted((index[a], index[b]))
            if j == l:
                raise KeyError(f"{path}:{lineno}: pair repeats feature {a!r}")
            pairs.append((j, l))
    return pairs


def write_pvalue_tsv(names: tuple, pairs, observed, pvalues, fh) -> None:
    fh.write("feature_j\tfeature_l\tkif_score\tp_value\n")
    for (j, l), w, pv in zip(pairs, observed, pvalues):
        fh.write(f"{names[j]}\t{names[l]}\t{fmt(w)}\t{float(pv)!r}\n")
