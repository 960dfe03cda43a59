"""Uniformly sampled multivariate trajectories and their CSV format."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

UNIFORM_RTOL = 1e-9


class CSVFormatError(ValueError):
    """Malformed trajectory CSV; ``row`` and ``column`` are 1-based."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or v.ndim != 2 or v.shape[0] != t.shape[0]:
            raise ValueError("times must be (m,) and values (m, n_x)")
        if t.size >= 2 and np.any(np.diff(t) <= 0):
            raise ValueError("time stamps must be strictly increasing")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.times.shape[0]

    @property
    def n_x(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return float((self.times[-1] - self.times[0]) / (self.m - 1))

    def is_uniform(self, rtol: float = UNIFORM_RTOL) -> bool:
        if self.m < 3:
            return True
        steps = np.diff(self.times)
        return bool(np.all(np.abs(steps - self.dt) <= rtol * abs(self.dt) + 1e-15 * np.abs(self.times[1:]).max()))

    def require_uniform(self) -> None:
        if not self.is_uniform():
            raise ValueError("time grid is not uniform")

    def slice(self, start: int, stop: int) -> TimeSeries:
        return TimeSeries(self.times[start:stop], self.values[start:stop])

    def with_values(self, values: np.ndarray) -> TimeSeries:
        return TimeSeries(self.times, values)

    def to_csv(self, path=None, labels: list[str] | None = None) -> str:
        labels = labels or [f"x{i + 1}" for i in range(self.n_x)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *labels])
        for t, row in zip(self.times, self.values):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> TimeSeries:
        return cls.from_csv_text(Path(path).read_text())

    @classmethod
    def from_csv_text(cls, text: str) -> TimeSeries:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise CSVFormatError("empty file")
        header = [h.strip() for h in rows[0]]
        if not header or header[0] != "t":
            raise CSVFormatError("header must start with 't'", row=1, column=1)
        n = len(header)
        if n < 2:
            raise CSVFormatError("need at least one state column", row=1)
        data = []
        for r, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != n:
                raise CSVFormatError(f"expected {n} fields, got {len(row)}", row=r)
            vals = []
            for c, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise CSVFormatError(f"non-numeric value {cell!r}", row=r, column=c) from None
                if not np.isfinite(vals[-1]):
                    raise CSVFormatError(f"non-finite value {cell!r}", row=r, column=c)
            data.append(vals)
        if not data:
            raise CSVFormatError("no data rows")
        arr = np.array(data)
        bad = np.nonzero(np.diff(arr[:, 0]) <= 0)[0]
        if bad.size:
            raise CSVFormatError("time stamps must be strictly increasing", row=int(bad[0]) + 3, column=1)
        return cls(arr[:, 0], arr[:, 1:])
