"""Cohort data model: observations, right-continuous step functions, CSV I/O.

A cohort row describes one subject of an illness-death process observed
under delayed entry: recruitment age ``R``, observed age ``V`` (onset,
disease-free death, or censoring, flagged by ``delta1``/``delta2``),
post-onset follow-up age ``W`` with death indicator ``delta3``, and a
covariate vector. Subjects with ``delta1 = 1`` and ``V < R`` are prevalent:
their onset age was reported retrospectively at recruitment.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CohortRowError,
    CohortSchemaError,
    DegenerateCovariateError,
    EmptyCohortError,
)

logger = logging.getLogger(__name__)

FIXED_COLUMNS = ("id", "R", "V", "delta1", "delta2", "W", "delta3")
COVARIATE_PREFIX = "Z_"


@dataclass(frozen=True)
class StepFunction:
    """Nondecreasing right-continuous step function, zero before the first jump.

    Parameters
    ----------
    times : ndarray
        Strictly increasing jump locations.
    increments : ndarray
        Positive jump sizes, same length as ``times``.

    Evaluation returns the sum of increments at times <= t, so the function
    is constant at its final value beyond the last jump.
    """

    times: np.ndarray
    increments: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        increments = np.asarray(self.increments, dtype=float)
        if times.ndim != 1 or increments.shape != times.shape:
            raise ValueError("times and increments must be 1-d arrays of equal length")
        if times.size and np.any(np.diff(times) <= 0):
            raise ValueError("jump times must be strictly increasing")
        if np.any(increments <= 0) or not np.all(np.isfinite(increments)):
            raise ValueError("increments must be positive and finite")
        cum = np.concatenate([[0.0], np.cumsum(increments)])
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "increments", increments)
        object.__setattr__(self, "_cum", cum)

    def __call__(self, t):
        idx = np.searchsorted(self.times, t, side="right")
        return self._cum[idx]

    @property
    def total(self) -> float:
        return float(self._cum[-1])


def eval_step(H: StepFunction, t):
    """Evaluate ``H`` at age(s) ``t`` (right-continuous convention)."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("evaluation points must be finite")
    out = H(t)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Observation:
    """One subject's record. ``Z`` is the covariate vector."""

    id: str
    R: float
    V: float
    delta1: int
    delta2: int
    W: float
    delta3: int
    Z: np.ndarray

    @property
    def prevalent(self) -> bool:
        return self.delta1 == 1 and self.V < self.R


def _check_row(row_id, R, V, d1, d2, W, d3, z) -> str | None:
    """Return the violated rule as text, or None if the row is valid."""
    vals = np.concatenate([[R, V, W], z])
    if not np.all(np.isfinite(vals)):
        return "all fields must be finite"
    if d1 not in (0, 1) or d2 not in (0, 1) or d3 not in (0, 1):
        return "delta indicators must be 0 or 1"
    if R < 0:
        return "R >= 0 violated"
    if V <= 0:
        return "V > 0 violated"
    if d1 + d2 > 1:
        return "delta1 + delta2 <= 1 violated"
    if d3 > d1:
        return "delta3 <= delta1 violated"
    if d1 == 0 and V < R:
        return "V >= R violated for non-prevalent"
    if d1 == 1 and W < max(V, R):
        return "W >= max(V, R) violated for diseased"
    return None


@dataclass(frozen=True)
class Cohort:
    """Immutable cohort backed by column arrays.

    ``standardized`` is True when covariates were min-max scaled to [0, 1];
    ``scaling`` then records the original per-covariate (min, max) pairs.
    """

    ids: tuple
    R: np.ndarray
    V: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    W: np.ndarray
    delta3: np.ndarray
    Z: np.ndarray
    covariate_names: tuple
    standardized: bool = False
    scaling: tuple | None = None

    def __post_init__(self):
        n = len(self.ids)
        for name in ("R", "V", "delta1", "delta2", "W", "delta3"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"column {name} has wrong length")
        if self.Z.shape != (n, len(self.covariate_names)):
            raise ValueError("Z shape does not match covariate_names")
        if self.standardized and self.Z.size:
            if self.Z.min() < -1e-12 or self.Z.max() > 1 + 1e-12:
                raise ValueError("standardized cohort has Z outside [0, 1]")
        for name in ("R", "V", "delta1", "delta2", "W", "delta3", "Z"):
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def n_prevalent(self) -> int:
        return int(np.sum((self.delta1 == 1) & (self.V < self.R)))

    @property
    def observations(self) -> list:
        return [
            Observation(
                self.ids[i],
                float(self.R[i]),
                float(self.V[i]),
                int(self.delta1[i]),
                int(self.delta2[i]),
                float(self.W[i]),
                int(self.delta3[i]),
                self.Z[i],
            )
            for i in range(self.n)
        ]

    def select_covariates(self, names) -> "Cohort":
        """Cohort restricted to the covariate columns in ``names`` (ordered)."""
        missing = [c for c in names if c not in self.covariate_names]
        if missing:
            raise KeyError(
                f"unknown covariates {missing}; available: {list(self.covariate_names)}"
            )
        idx = [self.covariate_names.index(c) for c in names]
        scaling = tuple(self.scaling[k] for k in idx) if self.scaling else None
        return Cohort(
            self.ids, self.R, self.V, self.delta1, self.delta2, self.W,
            self.delta3, np.ascontiguousarray(self.Z[:, idx]), tuple(names),
            self.standardized, scaling,
        )


def build_cohort(ids, R, V, delta1, delta2, W, delta3, Z, covariate_names,
                 standardized=False, scaling=None, drop_invalid=False) -> Cohort:
    """Validate row invariants, normalize post-onset fields, assemble a Cohort.

    Non-diseased rows always get ``W := V`` and ``delta3 := 0`` (their
    post-onset record is undefined). With ``drop_invalid`` rows violating an
    invariant are dropped with a logged count instead of raising.
    """
    ids = tuple(str(i) for i in ids)
    R = np.asarray(R, dtype=float).copy()
    V = np.asarray(V, dtype=float).copy()
    delta1 = np.asarray(delta1, dtype=np.int64).copy()
    delta2 = np.asarray(delta2, dtype=np.int64).copy()
    W = np.asarray(W, dtype=float).copy()
    delta3 = np.asarray(delta3, dtype=np.int64).copy()
    Z = np.asarray(Z, dtype=float).copy()
    if Z.ndim != 2:
        raise ValueError("Z must be a 2-d array")

    no_disease = delta1 == 0
    W[no_disease] = V[no_disease]
    delta3[no_disease] = 0

    keep = np.ones(len(ids), dtype=bool)
    n_dropped = 0
    for i in range(len(ids)):
        rule = _check_row(ids[i], R[i], V[i], delta1[i], delta2[i], W[i], delta3[i], Z[i])
        if rule is not None:
            if drop_invalid:
                keep[i] = False
                n_dropped += 1
            else:
                raise CohortRowError(ids[i], rule)
    if n_dropped:
        logger.warning("dropped %d invalid rows during ingest", n_dropped)
        ids = tuple(x for x, k in zip(ids, keep) if k)
        R, V, W = R[keep], V[keep], W[keep]
        delta1, delta2, delta3 = delta1[keep], delta2[keep], delta3[keep]
        Z = Z[keep]
    if len(ids) == 0:
        raise EmptyCohortError("cohort has no valid observations")
    return Cohort(ids, R, V, delta1, delta2, W, delta3, Z,
                  tuple(covariate_names), standardized, scaling)


@dataclass(frozen=True)
class IngestOptions:
    drop_invalid: bool = False
    standardized: bool = False


def ingest_csv(path, options: IngestOptions = IngestOptions()) -> Cohort:
    """Read a cohort from CSV.

    Expected header: ``id,R,V,delta1,delta2,W,delta3,Z_<name1>,...``. The
    W/delta3 cells may be empty when ``delta1 = 0``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCohortError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        fixed = tuple(header[: len(FIXED_COLUMNS)])
        cov_cols = header[len(FIXED_COLUMNS):]
        bad_cov = [c for c in cov_cols if not c.startswith(COVARIATE_PREFIX)]
        if fixed != FIXED_COLUMNS or bad_cov or not cov_cols:
            raise CohortSchemaError(
                "header mismatch: expected "
                f"{','.join(FIXED_COLUMNS)},Z_<name>,... got {','.join(header)}"
            )
        names = [c[len(COVARIATE_PREFIX):] for c in cov_cols]

        ids, R, V, d1, d2, W, d3, Z = [], [], [], [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CohortSchemaError(
                    f"line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            rid = row[0].strip()
            try:
                r, v = float(row[1]), float(row[2])
                e1, e2 = int(row[3]), int(row[4])
                w_raw, e3_raw = row[5].strip(), row[6].strip()
                if e1 == 0 and w_raw == "":
                    w = v
                else:
                    w = float(w_raw)
                e3 = int(e3_raw) if e3_raw != "" else 0
            except ValueError as exc:
                raise CohortRowError(rid, f"unparseable field ({exc})") from None
            try:
                z = np.array([float(c) for c in row[7:]], dtype=float)
            except ValueError as exc:
                raise CohortRowError(rid, f"unparseable covariate ({exc})") from None
            ids.append(rid)
            R.append(r)
            V.append(v)
            d1.append(e1)
            d2.append(e2)
            W.append(w)
            d3.append(e3)
            Z.append(z)

    if not ids:
        raise EmptyCohortError(f"{path} contains a header but no rows")
    return build_cohort(
        ids, R, V, d1, d2, W, d3, np.vstack(Z), names,
        standardized=options.standardized, drop_invalid=options.drop_invalid,
    )


def write_csv(cohort: Cohort, path) -> None:
    """Emit a cohort in the ingest schema; floats use shortest round-trip repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            list(FIXED_COLUMNS) + [COVARIATE_PREFIX + c for c in cohort.covariate_names]
        )
        for i in range(cohort.n):
            writer.writerow(
                [
                    cohort.ids[i],
                    repr(float(cohort.R[i])),
                    repr(float(cohort.V[i])),
                    int(cohort.delta1[i]),
                    int(cohort.delta2[i]),
                    repr(float(cohort.W[i])),
                    int(cohort.delta3[i]),
                ]
                + [repr(float(x)) for x in cohort.Z[i]]
            )


def minmax_standardize(cohort: Cohort) -> Cohort:
    """Scale every covariate to [0, 1] via (x - min) / (max - min).

    The original (min, max) pairs are recorded on the returned cohort so
    coefficients remain interpretable. Raises on constant columns.
    """
    if cohort.standardized:
        raise ValueError("cohort is already min-max standardized")
    lo = cohort.Z.min(axis=0)
    hi = cohort.Z.max(axis=0)
    flat = np.nonzero(hi - lo <= 0)[0]
    if flat.size:
        names = [cohort.covariate_names[k] for k in flat]
        raise DegenerateCovariateError(f"constant covariate column(s): {names}")
    Z = (cohort.Z - lo) / (hi - lo)
    scaling = tuple((float(a), float(b)) for a, b in zip(lo, hi))
    return Cohort(
        cohort.ids, cohort.R, cohort.V, cohort.delta1, cohort.delta2,
        cohort.W, cohort.delta3, Z, cohort.covariate_names, True, scaling,
    )


def zscore_covariates(cohort: Cohort, names=None) -> Cohort:
    """Scale the given covariates (default all) to zero mean, unit variance.

    Used by the replication workflow; does not set the ``standardized`` flag,
    which is reserved for the min-max convention.
    """
    idx = (
        list(range(cohort.p))
        if names is None
        else [cohort.covariate_names.index(c) for c in names]
    )
    Z = cohort.Z.copy()
    sd = Z[:, idx].std(axis=0, ddof=0)
    if np.any(sd <= 0):
        flat = [cohort.covariate_names[idx[k]] for k in np.nonzero(sd <= 0)[0]]
        raise DegenerateCovariateError(f"constant covariate column(s): {flat}")
    Z[:, idx] = (Z[:, idx] - Z[:, idx].mean(axis=0)) / sd
    return Cohort(
        cohort.ids, cohort.R, cohort.V, cohort.delta1, cohort.delta2,
        cohort.W, cohort.delta3, Z, cohort.covariate_names, False, None,
    )
