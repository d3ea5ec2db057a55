"""Observed samples, CSV ingestion and treatment-group views."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyGroup,
    GroupTooSmall,
    MissingColumn,
    NonBinaryTreatment,
    NonNumericValue,
    ValidationError,
)

_TREATMENT_LITERALS = {"0": 0, "1": 1, "0.0": 0, "1.0": 1}


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Sample:
    """Covariates ``X`` (n x p), binary treatment ``T`` and optional outcome ``Y``.

    Arrays are copied and made read-only on construction. Structural checks
    (shapes, binary treatment, finiteness) always run; the group-size
    requirement is checked by :meth:`require_groups`, which the loaders and
    the estimation pipeline call.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: Optional[np.ndarray] = None
    ids: Optional[tuple] = None
    covariate_names: Optional[tuple] = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValidationError("covariates must be a 2-D array")
        n = X.shape[0]
        T = np.asarray(self.treatment)
        if T.shape != (n,):
            raise ValidationError(f"treatment must have length {n}")
        if not np.all(np.isin(T, (0, 1))):
            raise NonBinaryTreatment("treatment entries must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise ValidationError("covariates contain missing or non-finite values")
        object.__setattr__(self, "covariates", _frozen(X))
        T = np.array(T, dtype=np.int8)
        T.setflags(write=False)
        object.__setattr__(self, "treatment", T)
        if self.outcome is not None:
            Y = np.asarray(self.outcome, dtype=float)
            if Y.shape != (n,):
                raise ValidationError(f"outcome must have length {n}")
            if not np.all(np.isfinite(Y)):
                raise ValidationError("outcome contains non-finite values")
            object.__setattr__(self, "outcome", _frozen(Y))
        if self.ids is not None:
            ids = tuple(self.ids)
            if len(ids) != n:
                raise ValidationError(f"ids must have length {n}")
            object.__setattr__(self, "ids", ids)
        if self.covariate_names is not None:
            names = tuple(self.covariate_names)
            if len(names) != X.shape[1]:
                raise ValidationError("covariate_names length does not match p")
            object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def group_size(self, t: int) -> int:
        return int(np.count_nonzero(self.treatment == t))

    def require_groups(self, min_size: int = 2) -> "Sample":
        """Raise unless n >= 4 and both groups hold at least ``min_size`` rows."""
        for t in (1, 0):
            size = self.group_size(t)
            if size == 0:
                raise EmptyGroup(f"no subject has treatment={t}")
            if size < min_size:
                raise GroupTooSmall(f"group {t} has {size} subject(s); need {min_size}")
        if self.n < 4:
            raise ValidationError(f"need at least 4 subjects, got {self.n}")
        return self

    def take(self, rows) -> "Sample":
        """Row subset (with repetition allowed), e.g. for bootstrap resamples."""
        rows = np.asarray(rows, dtype=int)
        return Sample(
            self.covariates[rows],
            self.treatment[rows],
            None if self.outcome is None else self.outcome[rows],
            None if self.ids is None else tuple(self.ids[i] for i in rows),
            self.covariate_names,
        )

    def with_covariates(self, covariates, names=None) -> "Sample":
        return Sample(covariates, self.treatment, self.outcome, self.ids, names)


@dataclass(frozen=True)
class GroupView:
    sample: Sample
    t: int
    indices: np.ndarray

    @property
    def size(self) -> int:
        return len(self.indices)


def group_view(sample: Sample, t: int) -> GroupView:
    if t not in (0, 1):
        raise ValidationError(f"group must be 0 or 1, got {t!r}")
    idx = np.flatnonzero(sample.treatment == t)
    if idx.size == 0:
        raise EmptyGroup(f"no subject has treatment={t}")
    idx.setflags(write=False)
    return GroupView(sample, t, idx)


def _parse_float(text, row, col):
    s = text.strip()
    try:
        v = float(s)
    except ValueError:
        raise NonNumericValue(row, col, text) from None
    if not np.isfinite(v):
        raise NonNumericValue(row, col, text)
    return v


def _is_numeric(s):
    try:
        return np.isfinite(float(s))
    except ValueError:
        return False


def load_csv(
    path,
    treatment_col: str,
    outcome_col: Optional[str] = None,
    covariate_cols: Optional[Sequence[str]] = None,
    id_col: Optional[str] = None,
) -> Sample:
    """Read a comma-separated, UTF-8 file with a header row.

    When ``covariate_cols`` is omitted, every column other than the
    treatment, outcome and id columns whose cells are all numeric is used,
    in header order. Empty cells in a used column are an error.

    Raises:
        MissingColumn, NonBinaryTreatment, NonNumericValue, EmptyGroup,
        GroupTooSmall.
    """
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: file is empty") from None
        rows = [r for r in reader if r]
    width = len(header)
    for i, r in enumerate(rows, start=1):
        if len(r) != width:
            raise ValidationError(f"{path}: row {i} has {len(r)} fields, expected {width}")
    columns = {h: [r[j] for r in rows] for j, h in enumerate(header)}

    required = [treatment_col] + [c for c in (outcome_col, id_col) if c is not None]
    if covariate_cols is not None:
        required += list(covariate_cols)
    for c in required:
        if c not in columns:
            raise MissingColumn(f"column {c!r} not found in {path}")

    reserved = {treatment_col, outcome_col, id_col}
    if covariate_cols is None:
        covariate_cols = [
            h for h in header
            if h not in reserved and all(_is_numeric(v) for v in columns[h])
        ]
    covariate_cols = list(covariate_cols)
    if not covariate_cols:
        raise ValidationError(f"{path}: no numeric covariate columns")

    treatment = []
    for i, v in enumerate(columns[treatment_col], start=1):
        s = v.strip()
        if s not in _TREATMENT_LITERALS:
            raise NonBinaryTreatment(f"row {i}: treatment value {v!r} is not 0/1")
        treatment.append(_TREATMENT_LITERALS[s])

    X = np.array(
        [[_parse_float(columns[c][i], i + 1, c) for c in covariate_cols] for i in range(len(rows))],
        dtype=float,
    ).reshape(len(rows), len(covariate_cols))
    Y = None
    if outcome_col is not None:
        Y = np.array([_parse_float(v, i + 1, outcome_col) for i, v in enumerate(columns[outcome_col])])
    ids = tuple(columns[id_col]) if id_col is not None else None
    sample = Sample(X, np.array(treatment, dtype=np.int8), Y, ids, tuple(covariate_cols))
    return sample.require_groups()


def format_csv(sample: Sample, treatment_col="T", outcome_col="Y", id_col=None) -> str:
    """CSV text of ``sample``; floats carry 17 significant digits."""
    names = sample.covariate_names or tuple(f"X{j + 1}" for j in range(sample.p))
    header = ([id_col] if id_col else []) + [treatment_col]
    if sample.outcome is not None:
        header.append(outcome_col)
    header += list(names)
    fh = io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for i in range(sample.n):
        row = []
        if id_col:
            row.append(sample.ids[i] if sample.ids is not None else str(i + 1))
        row.append(str(int(sample.treatment[i])))
        if sample.outcome is not None:
            row.append(format(sample.outcome[i], ".17g"))
        row += [format(v, ".17g") for v in sample.covariates[i]]
        w.writerow(row)
    return fh.getvalue()


def write_csv(sample: Sample, path, treatment_col="T", outcome_col="Y", id_col=None) -> None:
    """Write ``sample`` so that :func:`load_csv` reproduces it bit-exactly."""
    text = format_csv(sample, treatment_col, outcome_col, id_col)
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
