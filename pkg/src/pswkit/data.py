"""Tabular input: a thin column store over CSV text.

Cells are kept as the strings that were read so that trimmed output can be
written back verbatim. Numeric views are produced on demand.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "N/A", "."})


@dataclass(frozen=True)
class Dataset:
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    # raw physical lines (without terminator), only when read from text
    raw_lines: tuple[str, ...] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(set(self.header)) != len(self.header):
            raise DataError("duplicate column names in header")
        width = len(self.header)
        for k, row in enumerate(self.rows):
            if len(row) != width:
                raise DataError(f"row {k + 2} has {len(row)} fields, expected {width}")

    # construction -----------------------------------------------------

    @classmethod
    def from_csv(cls, path: str | Path) -> "Dataset":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror}") from exc
        return cls.from_text(text)

    @classmethod
    def from_text(cls, text: str) -> "Dataset":
        lines = [ln for ln in text.splitlines() if ln.strip() != ""]
        if not lines:
            raise DataError("empty CSV input: a header row is required")
        parsed = [next(csv.reader([ln])) for ln in lines]
        header = tuple(h.strip() for h in parsed[0])
        rows = tuple(tuple(r) for r in parsed[1:])
        return cls(header, rows, raw_lines=tuple(lines))

    @classmethod
    def from_columns(cls, columns: Mapping[str, Iterable]) -> "Dataset":
        """Build from in-memory columns; numbers are rendered with ``repr``."""
        names = tuple(columns)
        cols = [[_render(v) for v in columns[name]] for name in names]
        n = {len(c) for c in cols}
        if len(n) > 1:
            raise DataError("columns have different lengths")
        rows = tuple(zip(*cols)) if cols else ()
        return cls(names, tuple(tuple(r) for r in rows))

    # access -----------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def has(self, name: str) -> bool:
        return name in self.header

    def column(self, name: str) -> list[str]:
        try:
            k = self.header.index(name)
        except ValueError:
            raise DataError(f"missing column: {name!r}") from None
        return [row[k] for row in self.rows]

    def numeric(self, name: str, what: str = "covariate") -> np.ndarray:
        out = np.empty(self.n)
        for i, cell in enumerate(self.column(name)):
            s = cell.strip()
            if s in MISSING_TOKENS:
                raise DataError(f"missing value in {what} {name!r} (row {i + 2})")
            try:
                out[i] = float(s)
            except ValueError:
                raise DataError(
                    f"non-numeric value {cell!r} in {what} {name!r} (row {i + 2})"
                ) from None
        if not np.all(np.isfinite(out)):
            raise DataError(f"non-finite value in {what} {name!r}")
        return out

    def labels(self, name: str, what: str = "treatment") -> np.ndarray:
        vals = [c.strip() for c in self.column(name)]
        for i, v in enumerate(vals):
            if v in MISSING_TOKENS:
                raise DataError(f"missing value in {what} {name!r} (row {i + 2})")
        return np.array(vals, dtype=object)

    def take(self, index: Sequence[int] | np.ndarray) -> "Dataset":
        """Rows by position (repeats allowed, as in bootstrap resampling)."""
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        rows = tuple(self.rows[int(i)] for i in index)
        raw = None
        if self.raw_lines is not None:
            raw = (self.raw_lines[0],) + tuple(self.raw_lines[int(i) + 1] for i in index)
        return Dataset(self.header, rows, raw_lines=raw)

    def with_column(self, name: str, values: Iterable) -> "Dataset":
        vals = [_render(v) for v in values]
        if len(vals) != self.n:
            raise DataError("new column has wrong length")
        if name in self.header:
            k = self.header.index(name)
            rows = tuple(r[:k] + (v,) + r[k + 1:] for r, v in zip(self.rows, vals))
            return Dataset(self.header, rows)
        return Dataset(self.header + (name,), tuple(r + (v,) for r, v in zip(self.rows, vals)))

    # output -----------------------------------------------------------

    def to_text(self) -> str:
        if self.raw_lines is not None:
            return "\n".join(self.raw_lines) + "\n"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _render(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
