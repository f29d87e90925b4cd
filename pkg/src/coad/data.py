"""Dataset container and the on-disk CSV formats.

The dataset schema is ``s_0..s_{ds-1},q_0..q_{dq-1}[,label]``: UTF-8,
LF line endings, decimal points only. Floats are printed with 12
significant digits, so a written file re-reads to exactly the written
values and re-writing is byte-stable.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


def format_float(x: float) -> str:
    return f"{x:.12g}"


@dataclass
class PairedDataset:
    """Aligned per-example feature rows for the two views, labels optional."""

    s: np.ndarray
    q: np.ndarray
    labels: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = np.atleast_2d(np.asarray(self.s, dtype=np.float64))
        self.q = np.atleast_2d(np.asarray(self.q, dtype=np.float64))
        if self.s.shape[0] != self.q.shape[0]:
            raise ValueError(
                f"row count mismatch: s has {self.s.shape[0]} rows, q has {self.q.shape[0]}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            if self.labels.shape != (self.s.shape[0],):
                raise ValueError("labels must be one column with one entry per row")
            if not np.all((self.labels == 0.0) | (self.labels == 1.0)):
                raise ValueError("labels must be binary")

    @property
    def n(self) -> int:
        return int(self.s.shape[0])

    @property
    def scores(self) -> tuple[np.ndarray, np.ndarray]:
        """The two views as scalar score vectors; requires single-feature views."""
        if self.s.shape[1] != 1 or self.q.shape[1] != 1:
            raise ValueError(
                "threshold operations need exactly one feature per view; "
                f"got {self.s.shape[1]} and {self.q.shape[1]}")
        return self.s[:, 0], self.q[:, 0]


def from_scored(ds) -> PairedDataset:
    """PairedDataset view of a ScoredDataset (one feature per view)."""
    return PairedDataset(
        s=ds.s_scores[:, None], q=ds.q_scores[:, None], labels=ds.labels,
        metadata={"seed": ds.seed, **ds.config},
    )


def write_dataset_csv(ds: PairedDataset, path) -> None:
    header = (
        [f"s_{i}" for i in range(ds.s.shape[1])]
        + [f"q_{i}" for i in range(ds.q.shape[1])]
        + (["label"] if ds.labels is not None else [])
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(ds.n):
            row = [format_float(v) for v in ds.s[i]] + [format_float(v) for v in ds.q[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            fh.write(",".join(row) + "\n")


_HEADER_RE = re.compile(r"^(s|q)_(\d+)$")


def _parse_header(fields: list[str], path) -> tuple[int, int, bool]:
    ds = dq = 0
    has_label = False
    expect = "s"
    for pos, name in enumerate(fields):
        if name == "label":
            if pos != len(fields) - 1:
                raise ValueError(f"{path}: 'label' must be the last column, found at column {pos + 1}")
            has_label = True
            continue
        m = _HEADER_RE.match(name)
        if not m:
            raise ValueError(f"{path}: unrecognized column name {name!r} at column {pos + 1}")
        view, idx = m.group(1), int(m.group(2))
        if view == "s":
            if expect != "s" or idx != ds:
                raise ValueError(f"{path}: s-columns must come first as s_0..s_k; got {name!r}")
            ds += 1
        else:
            expect = "q"
            if idx != dq:
                raise ValueError(f"{path}: q-columns must follow as q_0..q_k; got {name!r}")
            dq += 1
    if ds == 0 or dq == 0:
        raise ValueError(f"{path}: need at least one s_ column and one q_ column")
    return ds, dq, has_label


def read_dataset_csv(path) -> PairedDataset:
    """Read a dataset CSV, naming the offending row/field on any violation."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(p, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty dataset (no header)")
        ds_dim, dq_dim, has_label = _parse_header([h.strip() for h in header], path)
        width = ds_dim + dq_dim + (1 if has_label else 0)
        s_rows, q_rows, labels = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValueError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
            try:
                vals = [float(v) for v in row[: ds_dim + dq_dim]]
            except ValueError:
                bad = next(v for v in row[: ds_dim + dq_dim] if not _is_float(v))
                raise ValueError(f"{path}: row {lineno} has non-numeric value {bad!r}")
            s_rows.append(vals[:ds_dim])
            q_rows.append(vals[ds_dim:])
            if has_label:
                lab = row[-1].strip()
                if lab not in ("0", "1"):
                    raise ValueError(f"{path}: row {lineno} has non-binary label {lab!r}")
                labels.append(float(lab))
    if not s_rows:
        raise ValueError(f"{path}: empty dataset (no data rows)")
    return PairedDataset(
        s=np.asarray(s_rows), q=np.asarray(q_rows),
        labels=np.asarray(labels) if has_label else None,
        metadata={"source": "external", "path": str(path)},
    )


def _is_float(v: str) -> bool:
    try:
        float(v)
        return True
    except ValueError:
        return False


def write_table(path, columns: Sequence[tuple[str, Sequence]]) -> None:
    """Write named columns as CSV with 12-significant-digit floats."""
    names = [name for name, _ in columns]
    arrays = [list(vals) for _, vals in columns]
    n = len(arrays[0]) if arrays else 0
    if any(len(a) != n for a in arrays):
        raise ValueError("all columns must have equal length")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fields = []
            for a in arrays:
                v = a[i]
                fields.append(format_float(v) if isinstance(v, float) else str(v))
            fh.write(",".join(fields) + "\n")


def read_table(path) -> dict[str, list[str]]:
    """Read a CSV back as raw string columns (for round-trip checks)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[str]] = {h: [] for h in header}
        for row in reader:
            for h, v in zip(header, row):
                cols[h].append(v)
    return cols
