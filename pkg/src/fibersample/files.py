"""Reading model/move files and writing or reading table files."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, ModelMismatch, NotInFiber, ValidationError
from .metropolis import Move
from .mle import DecomposableStructure
from .model import ModelSpec, make_model, sufficient_statistics

FORMATS = ("csv", "json")


@dataclass
class ModelFile:
    model: ModelSpec
    preset: Optional[str] = None
    b: Optional[tuple] = None
    expected: Optional[tuple] = None
    moves: Optional[list] = None
    structure: Optional[DecomposableStructure] = None
    labels: Optional[tuple] = None
    initial: Optional[tuple] = None


def _read_int_rows(text: str) -> list:
    rows = []
    for line in csv.reader(io.StringIO(text)):
        cells = [c.strip() for c in line if c.strip()]
        if not cells or cells[0].startswith("#"):
            continue
        try:
            rows.append([int(c) for c in cells])
        except ValueError as exc:
            raise ValidationError(f"non-integer entry in {line}") from exc
    return rows


def load_model(path) -> ModelFile:
    """Load a model from JSON (``matrix``, ``odds`` and optional extras) or CSV matrix rows."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() != ".json":
        return ModelFile(make_model(_read_int_rows(text)))
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if not isinstance(data, dict) or "matrix" not in data:
        raise ValidationError(f"{path}: expected an object with a 'matrix' field")
    model = make_model(data["matrix"], data.get("odds"))
    out = ModelFile(model, preset=data.get("preset"))
    if data.get("b") is not None:
        out.b = tuple(int(v) for v in data["b"])
        if len(out.b) != model.matrix.d:
            raise DimensionMismatch(f"b has length {len(out.b)}, expected {model.matrix.d}")
    if data.get("expected") is not None:
        out.expected = tuple(float(v) for v in data["expected"])
        if len(out.expected) != model.matrix.m:
            raise DimensionMismatch(f"expected has length {len(out.expected)}, expected {model.matrix.m}")
    if data.get("moves") is not None:
        out.moves = [Move(tuple(mv)) for mv in data["moves"]]
    if data.get("structure") is not None:
        out.structure = DecomposableStructure.from_dict(data["structure"])
    if data.get("initial") is not None:
        out.initial = tuple(int(v) for v in data["initial"])
        if len(out.initial) != model.matrix.m:
            raise DimensionMismatch(f"initial table has length {len(out.initial)}, expected {model.matrix.m}")
        if out.b is None:
            out.b = sufficient_statistics(model.matrix, out.initial)
    if data.get("labels") is not None:
        out.labels = tuple(str(v) for v in data["labels"])
    return out


def load_moves(path) -> list:
    """Moves from JSON (list of lists, or an object with ``moves``) or CSV rows."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
        if isinstance(data, dict):
            data = data.get("moves", [])
        return [Move(tuple(int(v) for v in mv)) for mv in data]
    return [Move(tuple(row)) for row in _read_int_rows(text)]


# table files ---------------------------------------------------------------------

@dataclass
class TableFile:
    tables: np.ndarray
    labels: tuple
    meta: dict = field(default_factory=dict)
    chi_square: Optional[np.ndarray] = None
    accepted: Optional[np.ndarray] = None


def default_labels(m: int) -> tuple:
    return tuple(f"u_{j + 1}" for j in range(m))


def _fmt_float(v: float) -> str:
    return repr(float(v))


def write_tables(path, tables, *, labels: Sequence[str], fmt: str = "csv", meta: Optional[dict] = None,
                 chi_square: Optional[Sequence[float]] = None, retries: Optional[Sequence[int]] = None,
                 accepted: Optional[Sequence[bool]] = None) -> None:
    """Write one row per table.

    CSV carries a header of cell labels plus optional ``chi_square``,
    ``retries`` and ``accepted`` columns; the metadata goes to a JSON
    sidecar ``<path>.meta.json``. JSON holds metadata and one record per table.
    """
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; choose csv or json")
    tables = np.asarray(tables, dtype=np.int64).reshape(len(tables), len(labels))
    meta = dict(meta or {})
    path = Path(path)
    if fmt == "json":
        records = []
        for i, t in enumerate(tables):
            rec = {"table": [int(v) for v in t]}
            if chi_square is not None:
                rec["chi_square"] = float(chi_square[i])
            if retries is not None:
                rec["retries"] = int(retries[i])
            if accepted is not None:
                rec["accepted"] = bool(accepted[i])
            if "seed" in meta:
                rec["seed"] = meta["seed"]
                rec["index"] = i
            records.append(rec)
        path.write_text(json.dumps({"meta": meta, "labels": list(labels), "records": records},
                                   sort_keys=True) + "\n")
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    extra = [name for name, col in (("chi_square", chi_square), ("retries", retries),
                                    ("accepted", accepted)) if col is not None]
    w.writerow(list(labels) + extra)
    for i, t in enumerate(tables):
        row = [int(v) for v in t]
        if chi_square is not None:
            row.append(_fmt_float(chi_square[i]))
        if retries is not None:
            row.append(int(retries[i]))
        if accepted is not None:
            row.append(int(bool(accepted[i])))
        w.writerow(row)
    path.write_text(buf.getvalue())
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_tables(path, model: Optional[ModelSpec] = None, b: Optional[Sequence[int]] = None) -> TableFile:
    """Read a table file; with ``model`` and ``b`` every row must satisfy ``A u = b``."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
        labels = tuple(data.get("labels", ()))
        recs = data.get("records", [])
        m = len(labels) if labels else (len(recs[0]["table"]) if recs else 0)
        tables = np.array([r["table"] for r in recs], dtype=np.int64).reshape(len(recs), m)
        chi = np.array([r["chi_square"] for r in recs]) if recs and "chi_square" in recs[0] else None
        acc = np.array([r["accepted"] for r in recs]) if recs and "accepted" in recs[0] else None
        out = TableFile(tables, labels or default_labels(m), data.get("meta", {}), chi, acc)
    else:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValidationError(f"{path} is empty")
        header = rows[0]
        cells = [i for i, h in enumerate(header) if h not in ("chi_square", "retries", "accepted")]
        try:
            tables = np.array([[int(r[i]) for i in cells] for r in rows[1:]], dtype=np.int64)
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"{path}: malformed table row") from exc
        tables = tables.reshape(len(rows) - 1, len(cells))
        meta_path = Path(str(path) + ".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        chi = None
        if "chi_square" in header:
            k = header.index("chi_square")
            chi = np.array([float(r[k]) for r in rows[1:]])
        acc = None
        if "accepted" in header:
            k = header.index("accepted")
            acc = np.array([r[k] == "1" for r in rows[1:]])
        out = TableFile(tables, tuple(header[i] for i in cells), meta, chi, acc)
    if model is not None:
        if out.tables.shape[1] != model.matrix.m:
            raise ModelMismatch(f"{path} has {out.tables.shape[1]} cells, model has {model.matrix.m}")
        if b is not None:
            b = tuple(int(v) for v in b)
            for t in out.tables:
                if sufficient_statistics(model.matrix, t.tolist()) != b:
                    raise NotInFiber(f"{path}: table {t.tolist()} does not have sufficient statistics {b}")
    return out
