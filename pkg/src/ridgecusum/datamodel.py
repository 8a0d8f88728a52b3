"""Observation panels, time/index arithmetic and prefix-sum segment means.

Columns are time-ordered observations, rows are variables.  Sample indices are
1-based as in ``k(t) = floor(n t) + 1`` and ``k(1) = n + 1`` is an exclusive
sentinel, so a segment ``[a, b)`` holds columns ``a, ..., b - 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._backend import kahan_cumsum
from .exceptions import DegenerateDataError, ValidationError

# Absorbs binary round-off in products such as 0.29 * 100 before flooring.
_INDEX_TOL = 1e-9


def ifloor(x: float) -> int:
    return int(math.floor(x + _INDEX_TOL))


def iceil(x: float) -> int:
    return int(math.ceil(x - _INDEX_TOL))


@dataclass(frozen=True)
class ObservationMatrix:
    """A p x n panel of observations, one column per time point.

    Parameters
    ----------
    data : ndarray of shape (p, n)
        Finite real entries; copied and marked read-only.
    labels : sequence of str, optional
        Opaque per-column time labels.
    """

    data: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2:
            raise ValidationError("observation data must be a 2-D array (p x n)")
        p, n = arr.shape
        if p < 1:
            raise ValidationError("need at least one variable (p >= 1)")
        if n < 4:
            raise ValidationError(f"need at least 4 observations, got n={n}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("observation data contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != n:
                raise ValidationError(f"got {len(labels)} labels for {n} observations")
            object.__setattr__(self, "labels", labels)

    @property
    def p(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def gamma_n(self) -> float:
        return self.p / (self.n - 1)

    def segment(self, a: int, b: int) -> "ObservationMatrix":
        """Sub-panel of columns ``[a, b)`` (1-based)."""
        if not 1 <= a < b <= self.n + 1:
            raise ValidationError(f"invalid segment [{a}, {b}) for n={self.n}")
        labels = None if self.labels is None else self.labels[a - 1 : b - 1]
        return ObservationMatrix(self.data[:, a - 1 : b - 1], labels)


@dataclass(frozen=True)
class SegmentPrefix:
    """Column prefix sums: ``cumsum[:, j]`` is the sum of the first j columns."""

    cumsum: np.ndarray
    p: int = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        cs = np.asarray(self.cumsum, dtype=np.float64)
        cs.setflags(write=False)
        object.__setattr__(self, "cumsum", cs)
        object.__setattr__(self, "p", cs.shape[0])
        object.__setattr__(self, "n", cs.shape[1] - 1)

    @classmethod
    def from_array(cls, data: np.ndarray) -> "SegmentPrefix":
        return cls(kahan_cumsum(np.ascontiguousarray(data, dtype=np.float64)))

    @classmethod
    def from_observations(cls, obs: ObservationMatrix) -> "SegmentPrefix":
        return cls.from_array(obs.data)

    def segment_sum(self, a: int, b: int) -> np.ndarray:
        return self.cumsum[:, b - 1] - self.cumsum[:, a - 1]


def load_csv(
    path: str | Path,
    has_header: bool = False,
    orientation: str = "rows-as-time",
    label_column: bool = False,
) -> ObservationMatrix:
    """Read a rectangular numeric CSV into a p x n panel.

    Parameters
    ----------
    path : str or Path
        UTF-8, comma separated file.
    has_header : bool
        First row holds names and is skipped for parsing.
    orientation : {"rows-as-time", "rows-as-variables"}
        Never inferred.  With rows-as-time each row is one observation.
    label_column : bool
        First column holds opaque labels (time labels for rows-as-time).

    Raises
    ------
    ValidationError
        On ragged rows, unparsable cells (reported as 1-based (row, column) of
        the file) or fewer than four observations.
    """
    if orientation not in ("rows-as-time", "rows-as-variables"):
        raise ValidationError(f"unknown orientation {orientation!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if has_header:
        header, rows = rows[0], rows[1:]
    else:
        header = None
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    first_data_row = 2 if has_header else 1
    width = len(rows[0])
    labels: list[str] = []
    values = []
    for i, row in enumerate(rows):
        file_row = i + first_data_row
        if len(row) != width:
            raise ValidationError(
                f"{path}: row {file_row} has {len(row)} fields, expected {width}"
            )
        cells = row
        if label_column:
            labels.append(row[0].strip())
            cells = row[1:]
        parsed = []
        for j, cell in enumerate(cells):
            file_col = j + 1 + (1 if label_column else 0)
            try:
                v = float(cell)
            except ValueError:
                raise ValidationError(
                    f"{path}: cannot parse {cell!r} at (row {file_row}, column {file_col})"
                ) from None
            if not math.isfinite(v):
                raise ValidationError(
                    f"{path}: non-finite value at (row {file_row}, column {file_col})"
                )
            parsed.append(v)
        values.append(parsed)
    arr = np.asarray(values, dtype=np.float64)
    if orientation == "rows-as-time":
        arr = arr.T
        time_labels = labels if label_column else None
    else:
        time_labels = None
        if header is not None:
            time_labels = header[1:] if label_column else header
    if arr.shape[1] < 4:
        raise ValidationError(f"{path}: need at least 4 observations, got {arr.shape[1]}")
    return ObservationMatrix(arr, time_labels)


def k_of(t: float, n: int) -> int:
    """Sample index ``floor(n t) + 1`` of time ``t`` in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"time {t} outside [0, 1]")
    return min(ifloor(n * t), n) + 1


def segment_mean(prefix: SegmentPrefix, a: int, b: int) -> np.ndarray:
    if a >= b:
        raise ValidationError(f"empty segment [{a}, {b})")
    if a < 1 or b > prefix.n + 1:
        raise ValidationError(f"segment [{a}, {b}) outside 1..{prefix.n + 1}")
    return prefix.segment_sum(a, b) / (b - a)


def effective_size_from_indices(k1: int, k2: int, k3: int) -> float:
    if not k1 < k2 < k3:
        raise ValidationError(f"empty segment in index triple ({k1}, {k2}, {k3})")
    return (k2 - k1) * (k3 - k2) / (k3 - k1)


def effective_sample_size(t1: float, t2: float, t3: float, n: int) -> float:
    return effective_size_from_indices(k_of(t1, n), k_of(t2, n), k_of(t3, n))


def harmonic_size(t1: float, t2: float, t3: float) -> float:
    """Continuum limit of ``N / n``: ``(1/(t2-t1) + 1/(t3-t2))^-1``."""
    return 1.0 / (1.0 / (t2 - t1) + 1.0 / (t3 - t2))


def check_constant(obs: ObservationMatrix) -> None:
    if np.all(obs.data == obs.data[:, :1]):
        raise DegenerateDataError("all observations are identical; the pooled covariance is zero")


__all__: Sequence[str] = [
    "ObservationMatrix",
    "SegmentPrefix",
    "load_csv",
    "k_of",
    "segment_mean",
    "effective_sample_size",
    "effective_size_from_indices",
    "harmonic_size",
]
