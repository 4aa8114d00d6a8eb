"""Unit-level data model: a population with an embedded experimental sample.

A frame holds every unit in the population of inference.  Sampled units
(z = 1) carry a treatment indicator and an observed outcome; non-sampled
units (z = 0) carry covariates only.  The sample is a subset of the
population, so Pr(Z = 1) = n / N.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np


class FrameError(ValueError):
    """A frame or its source file violates the data contract."""


@dataclass(frozen=True)
class UnitRecord:
    id: str
    z: int
    w: Optional[int]
    y: Optional[float]
    x: tuple[float, ...]


@dataclass(frozen=True)
class OutcomeRange:
    """Known outcome range [y_lo, y_hi], shared by sample and population."""

    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not self.y_lo < self.y_hi:
            raise FrameError(f"invalid outcome range [{self.y_lo}, {self.y_hi}]")

    @property
    def width(self) -> float:
        return self.y_hi - self.y_lo


@dataclass(eq=False)
class StudyFrame:
    """Immutable population frame.  Arrays are aligned to row order.

    w and y use NaN for absent values (non-sampled units).
    """

    ids: tuple[str, ...]
    z: np.ndarray
    w: np.ndarray
    y: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        self.ids = tuple(str(i) for i in self.ids)
        self.z = np.asarray(self.z, dtype=np.int64)
        self.w = np.asarray(self.w, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.covariate_names = tuple(self.covariate_names)
        N = len(self.ids)
        if not (self.z.shape == self.w.shape == self.y.shape == (N,)):
            raise FrameError("z, w, y must each have one entry per unit")
        if self.x.shape != (N, len(self.covariate_names)):
            raise FrameError(
                f"covariate matrix shape {self.x.shape} does not match "
                f"{N} units x {len(self.covariate_names)} names"
            )
        for a in (self.z, self.w, self.y, self.x):
            a.flags.writeable = False

    @property
    def N(self) -> int:
        return len(self.ids)

    @property
    def n(self) -> int:
        return int(np.sum(self.z == 1))

    @property
    def q(self) -> int:
        return len(self.covariate_names)

    def units(self) -> Iterator[UnitRecord]:
        for i in range(self.N):
            sampled = self.z[i] == 1
            yield UnitRecord(
                id=self.ids[i],
                z=int(self.z[i]),
                w=int(self.w[i]) if sampled else None,
                y=float(self.y[i]) if sampled else None,
                x=tuple(self.x[i]),
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, StudyFrame):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.covariate_names == other.covariate_names
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.w, other.w, equal_nan=True)
            and np.array_equal(self.y, other.y, equal_nan=True)
            and np.array_equal(self.x, other.x)
        )


@dataclass(frozen=True)
class Standardization:
    """Per-covariate location/scale transform (sample sd, N-1 denominator)."""

    means: np.ndarray
    sds: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.means) / self.sds

    def invert(self, x: np.ndarray) -> np.ndarray:
        return x * self.sds + self.means


def validate_frame(frame: StudyFrame) -> list[str]:
    """Return one entry per invariant violation; empty list means valid."""
    report = []
    if len(set(frame.ids)) != frame.N:
        report.append("duplicate ids")
    if not np.isin(frame.z, (0, 1)).all():
        report.append("non-binary sample indicator z")
    sampled = frame.z == 1
    if np.isnan(frame.w[sampled]).any():
        report.append("missing treatment indicator on sampled unit")
    if np.isnan(frame.y[sampled]).any():
        report.append("missing outcome on sampled unit")
    w_s = frame.w[sampled]
    if not np.isin(w_s[~np.isnan(w_s)], (0, 1)).all():
        report.append("non-binary treatment indicator w")
    if not np.isnan(frame.w[~sampled]).all():
        report.append("treatment indicator present on non-sampled unit")
    if not np.isnan(frame.y[~sampled]).all():
        report.append("outcome present on non-sampled unit")
    if not np.isfinite(frame.x).all():
        report.append("missing or non-finite covariate value")
    n = int(sampled.sum())
    if n == 0:
        report.append("no sampled units")
    elif n == frame.N:
        report.append("no non-sampled units; bounds degenerate")
    if n > 0:
        if not (w_s == 1).any():
            report.append("no treated units in sample")
        if not (w_s == 0).any():
            report.append("no control units in sample")
    return report


def _parse_cell(value: str, column: str, row: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise FrameError(f"row {row}: malformed value {value!r} in column {column!r}")


def load_frame(path, schema: Optional[dict] = None) -> StudyFrame:
    """Load a frame from CSV.

    ``schema`` maps roles to column names: keys ``id``, ``z``, ``w``, ``y``
    and ``covariates`` (a list).  By default the columns are ``id,z,w,y``
    and every remaining column is a covariate.  Empty w/y cells on z = 0
    rows denote absent values.  Raises FrameError on malformed rows,
    non-binary z/w, a missing outcome on a sampled row, or duplicate ids;
    sample-composition checks (degenerate n, missing treatment arms) are
    left to validate_frame so callers can decide.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FrameError(f"{path}: empty file, header row required")
        header = list(reader.fieldnames)
        schema = schema or {}
        id_col = schema.get("id", "id")
        z_col = schema.get("z", "z")
        w_col = schema.get("w", "w")
        y_col = schema.get("y", "y")
        cov_cols = schema.get("covariates")
        if cov_cols is None:
            cov_cols = [c for c in header if c not in (id_col, z_col, w_col, y_col)]
        for col in [id_col, z_col, w_col, y_col, *cov_cols]:
            if col not in header:
                raise FrameError(f"{path}: missing column {col!r}")

        ids, zs, ws, ys, xs = [], [], [], [], []
        for row_num, row in enumerate(reader, start=2):
            if any(row.get(c) is None for c in header):
                raise FrameError(f"row {row_num}: wrong number of fields")
            ids.append(row[id_col])
            z_raw = row[z_col].strip()
            if z_raw not in ("0", "1"):
                raise FrameError(f"row {row_num}: non-binary z value {z_raw!r}")
            z = int(z_raw)
            zs.append(z)
            w_raw = row[w_col].strip()
            y_raw = row[y_col].strip()
            if z == 1:
                if w_raw not in ("0", "1"):
                    raise FrameError(
                        f"row {row_num}: sampled unit needs a binary treatment "
                        f"indicator, got {w_raw!r}"
                    )
                if y_raw == "":
                    raise FrameError(f"row {row_num}: missing outcome on sampled unit")
                ws.append(float(w_raw))
                ys.append(_parse_cell(y_raw, y_col, row_num))
            else:
                if w_raw != "" or y_raw != "":
                    raise FrameError(
                        f"row {row_num}: w/y must be empty on non-sampled units"
                    )
                ws.append(np.nan)
                ys.append(np.nan)
            xs.append([_parse_cell(row[c], c, row_num) for c in cov_cols])

    if len(set(ids)) != len(ids):
        raise FrameError("duplicate ids")
    return StudyFrame(
        ids=tuple(ids),
        z=np.array(zs),
        w=np.array(ws),
        y=np.array(ys),
        x=np.array(xs, dtype=float).reshape(len(ids), len(cov_cols)),
        covariate_names=tuple(cov_cols),
    )


def write_frame(frame: StudyFrame, path) -> None:
    """Serialize a frame to CSV; load_frame(write_frame(f)) round-trips."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "z", "w", "y", *frame.covariate_names])
        for i in range(frame.N):
            sampled = frame.z[i] == 1
            writer.writerow(
                [
                    frame.ids[i],
                    int(frame.z[i]),
                    int(frame.w[i]) if sampled else "",
                    repr(float(frame.y[i])) if sampled else "",
                    *[repr(float(v)) for v in frame.x[i]],
                ]
            )


def standardize_covariates(frame: StudyFrame) -> tuple[StudyFrame, Standardization]:
    """Rescale every covariate to mean 0, sd 1 over all N units.

    Idempotent to floating-point precision.  Raises FrameError naming the
    column when a covariate has zero variance.
    """
    means = frame.x.mean(axis=0)
    sds = frame.x.std(axis=0, ddof=1)
    for j, sd in enumerate(sds):
        if sd == 0 or not np.isfinite(sd):
            raise FrameError(
                f"covariate {frame.covariate_names[j]!r} has zero variance"
            )
    transform = Standardization(means=means, sds=sds)
    out = StudyFrame(
        ids=frame.ids,
        z=frame.z,
        w=frame.w,
        y=frame.y,
        x=transform.apply(frame.x),
        covariate_names=frame.covariate_names,
    )
    return out, transform
