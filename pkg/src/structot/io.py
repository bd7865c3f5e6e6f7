"""File formats: measures and matrices as CSV, problems and results as JSON.

Measure CSV columns are ``x0, ..., x{d-1}`` followed by optional ``weight``
and ``label`` columns. Matrices are written row-major without a header.
Floats are written with ``repr`` so that they read back bit-for-bit.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import InputError
from .measures import DiscreteMeasure


def _fmt(x) -> str:
    return repr(float(x))


def write_matrix_csv(M, path) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in M:
            w.writerow([_fmt(x) for x in row])


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path} is empty")
    try:
        M = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if M.ndim != 2:
        raise InputError(f"{path}: rows have different lengths")
    return M


def write_vector_csv(v, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for x in np.asarray(v, dtype=float).ravel():
            w.writerow([_fmt(x)])


def write_measure_csv(mu: DiscreteMeasure, path, with_weights: bool = True) -> None:
    d = mu.dim
    header = [f"x{k}" for k in range(d)]
    if with_weights:
        header.append("weight")
    if mu.labels is not None:
        header.append("label")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(mu.size):
            row = [_fmt(x) for x in mu.points[i]]
            if with_weights:
                row.append(_fmt(mu.weights[i]))
            if mu.labels is not None:
                row.append(str(int(mu.labels[i])))
            w.writerow(row)


def read_measure_csv(path, allow_duplicates: bool = False) -> DiscreteMeasure:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        rows = [r for r in reader if r]
    if not rows:
        raise InputError(f"{path} has no data rows")
    coords = [k for k, h in enumerate(header) if h.startswith("x")]
    if not coords:
        raise InputError(f"{path}: no coordinate columns x0, x1, ...")
    try:
        pts = np.array([[float(r[k]) for k in coords] for r in rows])
        wts = (np.array([float(r[header.index("weight")]) for r in rows])
               if "weight" in header else None)
        labs = (np.array([int(r[header.index("label")]) for r in rows])
                if "label" in header else None)
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return DiscreteMeasure(pts, wts, labs, allow_duplicates=allow_duplicates)


def measure_from_dict(d: dict, base: Path | None = None) -> DiscreteMeasure:
    """Inline ``{"points", "weights"?, "labels"?}`` or ``{"file": path}``."""
    dup = bool(d.get("allow_duplicates", False))
    if "file" in d:
        p = Path(d["file"])
        if base is not None and not p.is_absolute():
            p = base / p
        if p.suffix.lower() == ".json":
            with open(p) as fh:
                return measure_from_dict(json.load(fh), p.parent)
        return read_measure_csv(p, allow_duplicates=dup)
    return DiscreteMeasure(d["points"], d.get("weights"), d.get("labels"), allow_duplicates=dup)


def measure_to_dict(mu: DiscreteMeasure) -> dict:
    d = {"points": mu.points.tolist(), "weights": mu.weights.tolist()}
    if mu.labels is not None:
        d["labels"] = [int(x) for x in mu.labels]
    return d


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
