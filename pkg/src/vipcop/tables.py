"""Tabular dataset container, CSV ingestion, and deterministic splitting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Unusable input data: parse failures, degenerate or inconsistent tables."""


@dataclass(frozen=True)
class Table:
    """Dense numeric feature matrix with integer class labels.

    Arrays are normalized to contiguous float64 / int64 and frozen
    (read-only) so a table can be shared across threads safely.
    ``injected_rows`` / ``injected_cols`` are provenance flags marking
    rows/columns appended by augmentation or noising; ``None`` means no
    injection has happened along that axis.
    """

    x: np.ndarray
    y: np.ndarray
    class_count: int
    feature_names: tuple[str, ...] | None = None
    injected_rows: np.ndarray | None = None
    injected_cols: np.ndarray | None = None

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.int64)
        if x.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {x.shape}")
        if x.shape[0] == 0 or x.shape[1] == 0:
            raise DataError("empty table")
        if x.shape[0] != y.shape[0]:
            raise DataError(f"{x.shape[0]} rows but {y.shape[0]} labels")
        if self.class_count < 2:
            raise DataError("table must have at least 2 classes")
        if y.min() < 0 or y.max() >= self.class_count:
            raise DataError("labels must lie in [0, class_count)")
        if not np.all(np.isfinite(x)):
            raise DataError("feature matrix contains non-finite values")
        if self.feature_names is not None and len(self.feature_names) != x.shape[1]:
            raise DataError("feature_names length does not match column count")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        for name in ("injected_rows", "injected_cols"):
            flags = getattr(self, name)
            if flags is not None:
                flags = np.ascontiguousarray(flags, dtype=bool)
                expect = x.shape[0] if name == "injected_rows" else x.shape[1]
                if flags.shape != (expect,):
                    raise DataError(f"{name} has wrong length")
                flags.flags.writeable = False
                object.__setattr__(self, name, flags)
        x.flags.writeable = False
        y.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_cols(self) -> int:
        return self.x.shape[1]

    def row_flags(self) -> np.ndarray:
        """Injected-row flags, materialized as all-False when absent."""
        if self.injected_rows is None:
            return np.zeros(self.n_rows, dtype=bool)
        return self.injected_rows.copy()

    def col_flags(self) -> np.ndarray:
        if self.injected_cols is None:
            return np.zeros(self.n_cols, dtype=bool)
        return self.injected_cols.copy()

    def take_rows(self, indices: np.ndarray) -> "Table":
        idx = np.asarray(indices, dtype=np.int64)
        return Table(
            x=self.x[idx],
            y=self.y[idx],
            class_count=self.class_count,
            feature_names=self.feature_names,
            injected_rows=None if self.injected_rows is None else self.injected_rows[idx],
            injected_cols=self.injected_cols,
        )

    def take_cols(self, indices: np.ndarray) -> "Table":
        idx = np.asarray(indices, dtype=np.int64)
        names = None
        if self.feature_names is not None:
            names = tuple(self.feature_names[i] for i in idx)
        return Table(
            x=self.x[:, idx],
            y=self.y,
            class_count=self.class_count,
            feature_names=names,
            injected_rows=self.injected_rows,
            injected_cols=None if self.injected_cols is None else self.injected_cols[idx],
        )


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test partition parameters. Fractions must sum to 1."""

    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 42
    stratified: bool = True

    def __post_init__(self):
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f <= 0 for f in fracs):
            raise DataError("split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise DataError(f"split fractions sum to {sum(fracs)}, expected 1")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train_fraction, self.val_fraction, self.test_fraction)


def _is_missing(cell: str) -> bool:
    return cell.strip() == ""


def _try_float(cell: str) -> float | None:
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path: str | Path, label_column: str | int) -> Table:
    """Load an RFC-4180-style CSV (UTF-8, header row) into a Table.

    Numeric columns are parsed as reals; other columns are integer-encoded
    by first appearance. The label column is mapped to [0, K) by first
    appearance. Missing numeric cells (empty, or unparsable-as-finite like
    "nan") are imputed with the column mean; missing categorical cells get
    a dedicated category of their own.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty table") from None
        rows = list(reader)
    if not rows:
        raise DataError("empty table")

    if isinstance(label_column, int):
        label_idx = label_column
        if not 0 <= label_idx < len(header):
            raise DataError(f"label column index {label_column} out of range")
    else:
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise DataError(f"label column {label_column!r} not in header") from None

    width = len(header)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"row {r + 2}: expected {width} fields, got {len(row)}")

    feature_cols = [j for j in range(width) if j != label_idx]
    n = len(rows)
    x = np.empty((n, len(feature_cols)), dtype=np.float64)

    for out_j, j in enumerate(feature_cols):
        cells = [row[j] for row in rows]
        parsed = [None if _is_missing(c) else _try_float(c) for c in cells]
        numeric = all(p is not None for c, p in zip(cells, parsed) if not _is_missing(c))
        if numeric:
            col = np.array(
                [np.nan if p is None or not math.isfinite(p) else p for p in parsed]
            )
            missing = np.isnan(col)
            if missing.all():
                # a column with no usable value carries no information
                col[:] = 0.0
            elif missing.any():
                col[missing] = col[~missing].mean()
            x[:, out_j] = col
        else:
            codes: dict[str, int] = {}
            for i, cell in enumerate(cells):
                key = "" if _is_missing(cell) else cell
                if key not in codes:
                    codes[key] = len(codes)
                x[i, out_j] = codes[key]

    label_codes: dict[str, int] = {}
    y = np.empty(n, dtype=np.int64)
    for i, row in enumerate(rows):
        cell = row[label_idx]
        if _is_missing(cell):
            raise DataError(f"row {i + 2}: missing label in column {header[label_idx]!r}")
        if cell not in label_codes:
            label_codes[cell] = len(label_codes)
        y[i] = label_codes[cell]
    if len(label_codes) < 2:
        raise DataError("single-class label column")

    return Table(
        x=x,
        y=y,
        class_count=len(label_codes),
        feature_names=tuple(header[j] for j in feature_cols),
    )


def _apportion(total: int, fractions: tuple[float, float, float]) -> list[int]:
    """Largest-remainder allocation of `total` items across the fractions."""
    ideal = [total * f for f in fractions]
    counts = [int(math.floor(v)) for v in ideal]
    short = total - sum(counts)
    remainders = sorted(
        range(len(fractions)), key=lambda i: (-(ideal[i] - counts[i]), i)
    )
    for i in remainders[:short]:
        counts[i] += 1
    return counts


def split(table: Table, spec: SplitSpec) -> tuple[Table, Table, Table]:
    """Disjoint train/val/test partition, deterministic under (table, spec).

    Stratified mode allocates per class with largest remainders and then
    guarantees each split one row of every class whose count permits it.
    """
    n = table.n_rows
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    parts: list[list[np.ndarray]] = [[], [], []]

    if spec.stratified:
        for cls in range(table.class_count):
            cls_idx = np.flatnonzero(table.y == cls)
            if cls_idx.size == 0:
                continue
            counts = _apportion(cls_idx.size, spec.fractions)
            if cls_idx.size >= 3:
                # every split gets at least one row of this class
                while any(c == 0 for c in counts):
                    counts[counts.index(0)] += 1
                    counts[counts.index(max(counts))] -= 1
            perm = rng.permutation(cls_idx)
            offset = 0
            for s, c in enumerate(counts):
                parts[s].append(perm[offset : offset + c])
                offset += c
    else:
        counts = _apportion(n, spec.fractions)
        perm = rng.permutation(n)
        offset = 0
        for s, c in enumerate(counts):
            parts[s].append(perm[offset : offset + c])
            offset += c

    splits = []
    names = ("train", "val", "test")
    for name, chunks in zip(names, parts):
        idx = np.sort(np.concatenate(chunks)) if chunks else np.empty(0, dtype=np.int64)
        if idx.size == 0:
            raise DataError(f"{name} split is empty under fractions {spec.fractions}")
        splits.append(table.take_rows(idx))
    return splits[0], splits[1], splits[2]


def save_table(table: Table, path: str | Path) -> None:
    """Persist a table as CSV plus a JSON sidecar carrying provenance flags."""
    path = Path(path)
    names = table.feature_names or tuple(f"f{j}" for j in range(table.n_cols))
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["label"])
        for i in range(table.n_rows):
            writer.writerow([repr(float(v)) for v in table.x[i]] + [int(table.y[i])])
    meta = {
        "class_count": table.class_count,
        "feature_names": list(names),
        "injected_rows": None
        if table.injected_rows is None
        else table.injected_rows.astype(int).tolist(),
        "injected_cols": None
        if table.injected_cols is None
        else table.injected_cols.astype(int).tolist(),
    }
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=1), encoding="utf-8")


def load_table(path: str | Path) -> Table:
    """Inverse of :func:`save_table`. Labels are read back verbatim."""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    if not sidecar.exists():
        raise DataError(f"missing sidecar metadata: {sidecar}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    x = np.array([[float(c) for c in row[:-1]] for row in rows], dtype=np.float64)
    y = np.array([int(row[-1]) for row in rows], dtype=np.int64)
    return Table(
        x=x,
        y=y,
        class_count=int(meta["class_count"]),
        feature_names=tuple(meta["feature_names"]),
        injected_rows=None
        if meta["injected_rows"] is None
        else np.array(meta["injected_rows"], dtype=bool),
        injected_cols=None
        if meta["injected_cols"] is None
        else np.array(meta["injected_cols"], dtype=bool),
    )
