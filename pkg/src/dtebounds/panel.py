"""Long-format panel ingestion and treatment-pattern grouping."""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np
import pandas as pd

from .exceptions import ConfigError, DataError, InsufficientDataError, ParseError

DEFAULT_SCHEMA = {"unit": "unit", "period": "period", "treatment": "treatment", "outcome": "outcome"}
DEFAULT_MIN_SIZE = 20
_MISSING = {"", "na", "nan", "null", "none", "."}

Pattern = tuple


def as_pattern(bits) -> Pattern:
    """Normalize ``"111"``, ``[1, 1, 1]`` or ``(1, 1, 1)`` into a tuple of ints."""
    if isinstance(bits, str):
        bits = [c for c in bits if c not in " ,()[]"]
    out = tuple(int(b) for b in bits)
    if len(out) not in (3, 6) or any(b not in (0, 1) for b in out):
        raise ConfigError(f"invalid treatment pattern {bits!r}")
    return out


def pattern_label(pattern) -> str:
    return "".join(str(b) for b in pattern)


def all_patterns(length=3):
    return [tuple(p) for p in itertools.product((1, 0), repeat=length)]


def flip_last(pattern) -> Pattern:
    return tuple(pattern[:-1]) + (1 - pattern[-1],)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Validated long-format panel.

    ``frame`` has columns ``unit, period, treatment, outcome`` followed by any
    covariates; ``(unit, period)`` is unique.
    """

    frame: pd.DataFrame
    covariates: tuple = ()
    n_missing_rows: int = 0

    @property
    def periods(self):
        return tuple(int(p) for p in np.sort(self.frame["period"].unique()))

    @property
    def n_units(self):
        return int(self.frame["unit"].nunique())

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, schema: Optional[Mapping] = None,
                   covariates=None, outcome_range=None) -> "PanelDataset":
        schema = {**DEFAULT_SCHEMA, **(schema or {})}
        missing = [schema[k] for k in DEFAULT_SCHEMA if schema[k] not in frame.columns]
        if missing:
            raise ConfigError(f"missing columns: {', '.join(missing)}")
        if covariates is None:
            covariates = [c for c in frame.columns if c not in {schema[k] for k in DEFAULT_SCHEMA}]
        covariates = tuple(covariates)
        df = pd.DataFrame({
            "unit": frame[schema["unit"]].to_numpy(),
            "period": frame[schema["period"]].to_numpy(),
            "treatment": frame[schema["treatment"]].to_numpy(),
            "outcome": frame[schema["outcome"]].to_numpy(),
        })
        for c in covariates:
            df[c] = frame[c].to_numpy()
        keep = df["treatment"].notna() & df["outcome"].notna()
        n_missing = int((~keep).sum())
        df = df[keep].reset_index(drop=True)
        treat = pd.to_numeric(df["treatment"], errors="coerce")
        bad = ~treat.isin([0, 1])
        if bad.any():
            raise DataError(f"non-binary treatment value {df['treatment'][bad].iloc[0]!r} "
                            f"(row {int(np.flatnonzero(bad)[0])})")
        df["treatment"] = treat.astype(int)
        df["outcome"] = pd.to_numeric(df["outcome"], errors="raise").astype(float)
        if not np.all(np.isfinite(df["outcome"])):
            raise DataError("non-finite outcome value")
        df["period"] = pd.to_numeric(df["period"], errors="raise").astype(int)
        return cls._finish(df, covariates, n_missing, outcome_range)

    @classmethod
    def _finish(cls, df, covariates, n_missing, outcome_range):
        dup = df.duplicated(["unit", "period"])
        if dup.any():
            row = df[dup].iloc[0]
            raise DataError(f"duplicate (unit, period) = ({row['unit']}, {row['period']})")
        if outcome_range is not None:
            lo, hi = outcome_range
            inside = df["outcome"].between(lo, hi, inclusive="both")
            n_missing += int((~inside).sum())
            df = df[inside]
        df = df.sort_values(["unit", "period"], kind="mergesort").reset_index(drop=True)
        return cls(frame=df, covariates=tuple(covariates), n_missing_rows=n_missing)


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="utf-8", newline="") as fh:
            return fh.read()
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    raise DataError(f"cannot read panel source {source!r}")


def load_panel(source, schema: Optional[Mapping] = None, delimiter: str = ",",
               covariates=None, outcome_range=None) -> PanelDataset:
    """Parse delimited long-format text into a :class:`PanelDataset`.

    Parameters
    ----------
    source : path, bytes or file-like
        Delimited text with a header row.
    schema : mapping, optional
        Maps the logical names ``unit, period, treatment, outcome`` to column
        names.  An optional ``covariates`` entry lists covariate columns.
    outcome_range : (low, high), optional
        Closed interval; rows with outcomes outside it are dropped and counted.

    Rows with a missing treatment or outcome are dropped and counted.
    """
    schema = dict(schema or {})
    if covariates is None:
        covariates = schema.pop("covariates", None)
    else:
        schema.pop("covariates", None)
    schema = {**DEFAULT_SCHEMA, **schema}
    reader = csv.reader(io.StringIO(_read_text(source)), delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty input", line=1) from None
    missing = [schema[k] for k in DEFAULT_SCHEMA if schema[k] not in header]
    if missing:
        raise ConfigError(f"missing columns: {', '.join(missing)}")
    pos = {k: header.index(schema[k]) for k in DEFAULT_SCHEMA}
    if covariates is None:
        covariates = [h for h in header if h not in {schema[k] for k in DEFAULT_SCHEMA}]
    unknown = [c for c in covariates if c not in header]
    if unknown:
        raise ConfigError(f"unknown covariate columns: {', '.join(unknown)}")
    cov_pos = [header.index(c) for c in covariates]

    rows = []
    n_missing = 0
    for line_no, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", line=line_no)
        unit = fields[pos["unit"]].strip()
        t_raw = fields[pos["treatment"]].strip()
        y_raw = fields[pos["outcome"]].strip()
        try:
            period = int(float(fields[pos["period"]]))
        except ValueError:
            raise ParseError(f"period {fields[pos['period']]!r} is not an integer", line=line_no) from None
        if t_raw.lower() in _MISSING or y_raw.lower() in _MISSING:
            n_missing += 1
            continue
        try:
            treat = float(t_raw)
        except ValueError:
            raise DataError(f"line {line_no}: non-binary treatment value {t_raw!r}") from None
        if treat not in (0.0, 1.0):
            raise DataError(f"line {line_no}: non-binary treatment value {t_raw!r}")
        try:
            outcome = float(y_raw)
        except ValueError:
            raise ParseError(f"outcome {y_raw!r} is not a number", line=line_no) from None
        if not math.isfinite(outcome):
            raise DataError(f"line {line_no}: non-finite outcome")
        rows.append((unit, period, int(treat), outcome, *(fields[i].strip() for i in cov_pos)))
    df = pd.DataFrame(rows, columns=["unit", "period", "treatment", "outcome", *covariates])
    df = df.astype({"period": int, "treatment": int, "outcome": float})
    return PanelDataset._finish(df, covariates, n_missing, outcome_range)


@dataclass(frozen=True, eq=False)
class GroupIndex:
    """Balanced units of one window, keyed by treatment pattern.

    For a 6-period window the key is the concatenation of the first and the
    second three-period pattern.
    """

    window: tuple
    units: np.ndarray
    outcomes: np.ndarray  # units x window periods
    treatments: np.ndarray
    groups: dict = field(default_factory=dict)  # pattern -> row indices
    n_dropped: int = 0
    covariates: Optional[pd.DataFrame] = None

    @property
    def proportions(self):
        n = self.units.size
        return {p: (rows.size / n if n else 0.0) for p, rows in self.groups.items()}

    def size(self, pattern):
        return int(self.groups.get(as_pattern(pattern), np.empty(0)).size)

    def members(self, pattern):
        return list(self.units[self.groups.get(as_pattern(pattern), np.empty(0, dtype=int))])


def classify(data: PanelDataset, window) -> GroupIndex:
    """Assign every unit observed in all ``window`` periods to its pattern."""
    window = tuple(int(p) for p in window)
    if len(window) not in (3, 6):
        raise ConfigError("window must have 3 or 6 periods")
    absent = sorted(set(window) - set(data.periods))
    if absent:
        raise ConfigError(f"window periods not in data: {absent}")
    sub = data.frame[data.frame["period"].isin(window)]
    counts = sub.groupby("unit", sort=True)["period"].nunique()
    balanced = counts.index[counts == len(window)]
    n_dropped = int(data.frame["unit"].nunique() - balanced.size)
    sub = sub[sub["unit"].isin(balanced)]
    y = sub.pivot(index="unit", columns="period", values="outcome").loc[balanced, list(window)]
    d = sub.pivot(index="unit", columns="period", values="treatment").loc[balanced, list(window)]
    treat = d.to_numpy(dtype=int)
    groups = {}
    for p in all_patterns(len(window)):
        groups[p] = np.flatnonzero(np.all(treat == np.asarray(p), axis=1))
    cov = None
    if data.covariates:
        last = sub[sub["period"] == window[-1]].set_index("unit").loc[balanced, list(data.covariates)]
        cov = last.reset_index(drop=True)
    return GroupIndex(window=window, units=np.asarray(balanced), outcomes=y.to_numpy(dtype=float),
                      treatments=treat, groups=groups, n_dropped=n_dropped, covariates=cov)


CellFilter = Union[Mapping, Callable[[pd.DataFrame], np.ndarray], None]


def _filter_mask(index: GroupIndex, rows, cell_filter: CellFilter):
    if cell_filter is None:
        return np.ones(rows.size, dtype=bool)
    if index.covariates is None:
        raise ConfigError("covariate filter given but the panel has no covariates")
    cov = index.covariates.iloc[rows]
    if callable(cell_filter):
        return np.asarray(cell_filter(cov), dtype=bool)
    mask = np.ones(rows.size, dtype=bool)
    for name, value in cell_filter.items():
        if name not in cov.columns:
            raise ConfigError(f"unknown covariate {name!r}")
        allowed = value if isinstance(value, (list, tuple, set)) else [value]
        mask &= cov[name].astype(str).isin([str(v) for v in allowed]).to_numpy()
    return mask


def group_matrix(data: PanelDataset, index: GroupIndex, pattern, cell_filter: CellFilter = None,
                 min_size: int = DEFAULT_MIN_SIZE) -> np.ndarray:
    """Outcome matrix (units x window periods, oldest first) of one pattern group.

    ``cell_filter`` keeps units whose covariates (taken at the window's last
    period) match every ``name: value`` entry, or for which the callable
    returns True.
    """
    pattern = as_pattern(pattern)
    if len(pattern) != len(index.window):
        raise ConfigError("pattern length does not match the window")
    rows = index.groups[pattern]
    rows = rows[_filter_mask(index, rows, cell_filter)]
    if rows.size < min_size:
        raise InsufficientDataError(
            f"group {pattern_label(pattern)} has {rows.size} units, fewer than {min_size}",
            pattern=pattern, size=int(rows.size),
        )
    return index.outcomes[rows]


def group_matrices(data: PanelDataset, window, cell_filter: CellFilter = None):
    """All eight pattern groups of a 3-period window as outcome matrices (no size check)."""
    index = classify(data, window)
    return {p: group_matrix(data, index, p, cell_filter, min_size=0) for p in all_patterns(3)}, index
