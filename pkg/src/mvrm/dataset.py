"""Repeated-measures data model and CSV ingestion.

A dataset holds g groups of subjects, each subject a dense vector of p
variables observed at t time points.  The canonical within-subject layout is
time-major: entry (time k, variable s) sits at flat index k*p + s (0-based).
Stacked across groups (group, then time, then variable) this ordering is the
single source of truth for every matrix built downstream.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "LongRecord",
    "Schema",
    "RepeatedMeasuresDataset",
    "load_long",
    "load_wide",
    "write_long",
    "write_wide",
    "drop_variable",
    "select_time",
]


class DataError(ValueError):
    """Raised when input data violate the dataset contract."""


# wide column names like "SF-36 PCS (1)" -> variable "SF-36 PCS", time "1"
_WIDE_COLUMN_RE = re.compile(r"^(.*\S)\s*\((.+)\)\s*$")


@dataclass(frozen=True)
class LongRecord:
    """One (subject, time) row of a long-format table."""

    subject: str
    group: str
    time: str
    values: dict[str, float | None]


@dataclass
class Schema:
    """Column-role mapping for CSV ingestion.

    For long files, ``group``/``subject``/``time`` name the role columns and
    ``variables`` (optional) restricts and orders the measurement columns.
    For wide files, ``columns`` maps each measurement column to its
    (variable, time) pair; when omitted, column names of the form
    ``"var (time)"`` are parsed automatically.  Cells equal to one of
    ``missing`` (after stripping) are treated as absent.
    """

    group: str = "group"
    subject: str = "subject"
    time: str = "time"
    variables: list[str] | None = None
    time_order: list[str] | None = None
    columns: dict[str, tuple[str, str]] | None = None
    missing: tuple[str, ...] = ("", "NA")

    @classmethod
    def from_json(cls, source) -> "Schema":
        """Load a schema from a JSON file path, stream, or parsed dict."""
        if isinstance(source, dict):
            raw = source
        elif isinstance(source, (str, Path)):
            raw = json.loads(Path(source).read_text())
        else:
            raw = json.load(source)
        known = {"group", "subject", "time", "variables", "time_order", "columns", "missing"}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown schema keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "missing" in kwargs:
            kwargs["missing"] = tuple(kwargs["missing"])
        if "columns" in kwargs and kwargs["columns"] is not None:
            kwargs["columns"] = {
                col: (str(vt[0]), str(vt[1])) for col, vt in kwargs["columns"].items()
            }
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class RepeatedMeasuresDataset:
    """Complete-case repeated-measures data in canonical ordering.

    ``groups[i]`` is an (n_i, p*t) float array; row j is subject j's vector
    with entry (time k, variable s) at flat index ``k*p + s``.  Arrays are
    read-only: datasets are immutable after construction and safe to share.
    """

    group_labels: tuple[str, ...]
    time_labels: tuple[str, ...]
    variable_labels: tuple[str, ...]
    groups: tuple[np.ndarray, ...]
    n_dropped: int = 0

    def __post_init__(self):
        for name, labels in (
            ("group", self.group_labels),
            ("time", self.time_labels),
            ("variable", self.variable_labels),
        ):
            if len(set(labels)) != len(labels):
                raise DataError(f"duplicate {name} labels: {labels}")
        if len(self.groups) != len(self.group_labels):
            raise DataError("one subject block required per group")
        width = self.n_variables * self.n_times
        frozen = []
        for label, block in zip(self.group_labels, self.groups):
            arr = np.ascontiguousarray(block, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != width:
                raise DataError(
                    f"group {label!r}: expected shape (n, {width}), got {arr.shape}"
                )
            if arr.shape[0] < 2:
                raise DataError(
                    f"group {label!r} has {arr.shape[0]} complete subjects; need at least 2"
                )
            if not np.all(np.isfinite(arr)):
                raise DataError(f"group {label!r} contains non-finite values")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "groups", tuple(frozen))

    # -- shape accessors ----------------------------------------------------

    @property
    def n_groups(self) -> int:
        return len(self.group_labels)

    @property
    def n_times(self) -> int:
        return len(self.time_labels)

    @property
    def n_variables(self) -> int:
        return len(self.variable_labels)

    @property
    def group_sizes(self) -> tuple[int, ...]:
        return tuple(block.shape[0] for block in self.groups)

    @property
    def n_total(self) -> int:
        return sum(self.group_sizes)

    def subject_vector(self, group: int, subject: int) -> np.ndarray:
        """Return subject ``subject`` of group ``group`` (both 0-based)."""
        if not 0 <= group < self.n_groups:
            raise IndexError(f"group index {group} out of range [0, {self.n_groups})")
        block = self.groups[group]
        if not 0 <= subject < block.shape[0]:
            raise IndexError(
                f"subject index {subject} out of range [0, {block.shape[0]}) "
                f"in group {self.group_labels[group]!r}"
            )
        return block[subject]

    def column_labels(self) -> list[str]:
        """Labels for the p*t subject-vector columns, e.g. ``"x (1)"``."""
        return [
            f"{var} ({time})"
            for time in self.time_labels
            for var in self.variable_labels
        ]

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All subjects as one (N, p*t) matrix plus their group labels."""
        X = np.vstack(self.groups)
        y = np.repeat(np.array(self.group_labels, dtype=object), self.group_sizes)
        return X, y

    @classmethod
    def from_arrays(
        cls,
        groups,
        n_times: int = 1,
        group_labels=None,
        time_labels=None,
        variable_labels=None,
    ) -> "RepeatedMeasuresDataset":
        """Build a dataset from per-group (n_i, p*t) arrays in canonical order."""
        groups = tuple(np.asarray(g, dtype=float) for g in groups)
        if not groups:
            raise DataError("at least one group required")
        if groups[0].ndim != 2:
            raise DataError(f"group arrays must be 2-D, got {groups[0].ndim}-D")
        width = groups[0].shape[1]
        if width % n_times != 0:
            raise DataError(f"row width {width} not divisible by n_times={n_times}")
        p = width // n_times
        if group_labels is None:
            group_labels = tuple(f"g{i + 1}" for i in range(len(groups)))
        if time_labels is None:
            time_labels = tuple(str(k + 1) for k in range(n_times))
        if variable_labels is None:
            variable_labels = tuple(f"x{s + 1}" for s in range(p))
        return cls(
            group_labels=tuple(group_labels),
            time_labels=tuple(time_labels),
            variable_labels=tuple(variable_labels),
            groups=groups,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, RepeatedMeasuresDataset):
            return NotImplemented
        return (
            self.group_labels == other.group_labels
            and self.time_labels == other.time_labels
            and self.variable_labels == other.variable_labels
            and all(np.array_equal(a, b) for a, b in zip(self.groups, other.groups))
        )

    def __repr__(self) -> str:
        return (
            f"RepeatedMeasuresDataset(g={self.n_groups}, t={self.n_times}, "
            f"p={self.n_variables}, n={self.group_sizes}, dropped={self.n_dropped})"
        )


# -- parsing helpers ---------------------------------------------------------


def _open_source(source):
    if isinstance(source, (str, Path)):
        return open(source, "r", newline=""), True
    return source, False


def _parse_cell(text: str, missing: tuple[str, ...]) -> float | None:
    """Parse a numeric cell; sentinels and non-finite values count as missing."""
    stripped = text.strip()
    if stripped in missing:
        return None
    value = float(stripped)
    return value if np.isfinite(value) else None


def _ordered_unique(items) -> list:
    seen = {}
    for item in items:
        seen.setdefault(item, None)
    return list(seen)


def _resolve_times(
    observed: list[str], schema: Schema, require_observed: bool = True
) -> list[str]:
    """Final time grid: explicit schema order when given, else first appearance."""
    if schema.time_order is None:
        return observed
    extra = set(observed) - set(schema.time_order)
    if extra:
        raise DataError(
            f"time labels {sorted(extra)} not listed in schema time_order"
        )
    if require_observed:
        unseen = [t for t in schema.time_order if t not in set(observed)]
        if unseen:
            raise DataError(
                f"time labels {unseen} in schema time_order never appear in the data"
            )
    return list(schema.time_order)


def load_long(source, schema: Schema | None = None) -> RepeatedMeasuresDataset:
    """Load a long-format CSV (one row per subject and time point).

    Parameters
    ----------
    source : path or text stream
        RFC-4180 CSV with a header row containing the schema's group,
        subject, and time columns plus one numeric column per variable.
    schema : Schema, optional
        Column roles; defaults to columns named ``group``/``subject``/``time``
        with every remaining column treated as a variable.

    Returns
    -------
    RepeatedMeasuresDataset
        Groups ordered by first appearance; time points ordered by first
        appearance unless the schema fixes an explicit ``time_order``.
        Subjects missing any (time, variable) cell are excluded and counted
        in ``n_dropped`` (complete-case rule).

    Raises
    ------
    DataError
        On duplicate (subject, time) rows, a subject appearing in two
        groups, missing role columns, non-numeric variable cells, or fewer
        than 2 complete subjects in any group.
    """
    schema = schema or Schema()
    stream, owned = _open_source(source)
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty input: header row required") from None
        columns = {name: idx for idx, name in enumerate(header)}
        for role, name in (("group", schema.group), ("subject", schema.subject), ("time", schema.time)):
            if name not in columns:
                raise DataError(f"{role} column {name!r} not found in header")
        if schema.variables is None:
            variables = [
                name
                for name in header
                if name not in (schema.group, schema.subject, schema.time)
            ]
        else:
            absent = [v for v in schema.variables if v not in columns]
            if absent:
                raise DataError(f"variable columns not found in header: {absent}")
            variables = list(schema.variables)
        if not variables:
            raise DataError("no variable columns found")

        records: dict[str, dict[str, LongRecord]] = {}
        subject_group: dict[str, str] = {}
        subject_order: list[str] = []
        time_seen: list[str] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"line {line_no}: expected {len(header)} cells, got {len(row)}")
            subject = row[columns[schema.subject]].strip()
            group = row[columns[schema.group]].strip()
            time = row[columns[schema.time]].strip()
            values: dict[str, float | None] = {}
            for var in variables:
                cell = row[columns[var]]
                try:
                    values[var] = _parse_cell(cell, schema.missing)
                except ValueError:
                    raise DataError(
                        f"line {line_no}: non-numeric value {cell!r} in column {var!r} "
                        f"for subject {subject!r}"
                    ) from None
            if subject in subject_group:
                if subject_group[subject] != group:
                    raise DataError(
                        f"subject {subject!r} appears in groups "
                        f"{subject_group[subject]!r} and {group!r}"
                    )
            else:
                subject_group[subject] = group
                subject_order.append(subject)
            per_subject = records.setdefault(subject, {})
            if time in per_subject:
                raise DataError(f"duplicate row for subject {subject!r} at time {time!r}")
            per_subject[time] = LongRecord(subject, group, time, values)
            time_seen.append(time)
    finally:
        if owned:
            stream.close()

    times = _resolve_times(_ordered_unique(time_seen), schema)
    if not times:
        raise DataError("no time points found")
    group_order = _ordered_unique(subject_group[s] for s in subject_order)

    complete: dict[str, list[np.ndarray]] = {g: [] for g in group_order}
    dropped = 0
    for subject in subject_order:
        per_subject = records[subject]
        vector = np.empty(len(times) * len(variables))
        ok = True
        for k, time in enumerate(times):
            record = per_subject.get(time)
            if record is None:
                ok = False
                break
            for s, var in enumerate(variables):
                value = record.values[var]
                if value is None:
                    ok = False
                    break
                vector[k * len(variables) + s] = value
            if not ok:
                break
        if ok:
            complete[subject_group[subject]].append(vector)
        else:
            dropped += 1

    for group in group_order:
        if len(complete[group]) < 2:
            raise DataError(
                f"group {group!r} has {len(complete[group])} complete subjects; need at least 2"
            )
    return RepeatedMeasuresDataset(
        group_labels=tuple(group_order),
        time_labels=tuple(times),
        variable_labels=tuple(variables),
        groups=tuple(np.array(complete[g]) for g in group_order),
        n_dropped=dropped,
    )


def load_wide(source, schema: Schema | None = None) -> RepeatedMeasuresDataset:
    """Load a wide-format CSV (one row per subject, one column per cell).

    Each variable must have a column for every time point.  The
    column-to-(variable, time) mapping comes from ``schema.columns`` or,
    when absent, from column names shaped like ``"var (time)"``.  Rows with
    a non-numeric or missing cell are excluded and counted.

    Produces a dataset identical to ``load_long`` on the equivalent long
    table.
    """
    schema = schema or Schema()
    stream, owned = _open_source(source)
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty input: header row required") from None
        if schema.group not in header:
            raise DataError(f"group column {schema.group!r} not found in header")

        if schema.columns is not None:
            mapping = dict(schema.columns)
            absent = [c for c in mapping if c not in header]
            if absent:
                raise DataError(f"schema columns not found in header: {absent}")
        else:
            mapping = {}
            for name in header:
                if name in (schema.group, schema.subject):
                    continue
                match = _WIDE_COLUMN_RE.match(name)
                if match:
                    mapping[name] = (match.group(1), match.group(2))
            if not mapping:
                raise DataError(
                    'no measurement columns recognized; name them "var (time)" '
                    "or supply an explicit schema.columns mapping"
                )

        if schema.variables is not None:
            variables = list(schema.variables)
        else:
            variables = _ordered_unique(vt[0] for vt in mapping.values())
        times = _resolve_times(
            _ordered_unique(vt[1] for vt in mapping.values()),
            schema,
            require_observed=False,  # the gap check below names missing columns
        )

        cell_to_column: dict[tuple[str, str], str] = {}
        for column, (var, time) in mapping.items():
            cell_to_column[(var, time)] = column
        gaps = [
            f"variable {var!r} lacks time {time!r}"
            for var in variables
            for time in times
            if (var, time) not in cell_to_column
        ]
        if gaps:
            raise DataError("; ".join(gaps))

        index = {name: idx for idx, name in enumerate(header)}
        groups: dict[str, list[np.ndarray]] = {}
        group_order: list[str] = []
        dropped = 0
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"line {line_no}: expected {len(header)} cells, got {len(row)}")
            group = row[index[schema.group]].strip()
            if group in schema.missing:
                dropped += 1
                continue
            vector = np.empty(len(times) * len(variables))
            ok = True
            for k, time in enumerate(times):
                for s, var in enumerate(variables):
                    cell = row[index[cell_to_column[(var, time)]]]
                    try:
                        value = _parse_cell(cell, schema.missing)
                    except ValueError:
                        value = None
                    if value is None:
                        ok = False
                        break
                    vector[k * len(variables) + s] = value
                if not ok:
                    break
            if ok:
                if group not in groups:
                    groups[group] = []
                    group_order.append(group)
                groups[group].append(vector)
            else:
                dropped += 1
    finally:
        if owned:
            stream.close()

    if not group_order:
        raise DataError("no complete rows found")
    for group in group_order:
        if len(groups[group]) < 2:
            raise DataError(
                f"group {group!r} has {len(groups[group])} complete subjects; need at least 2"
            )
    return RepeatedMeasuresDataset(
        group_labels=tuple(group_order),
        time_labels=tuple(times),
        variable_labels=tuple(variables),
        groups=tuple(np.array(groups[g]) for g in group_order),
        n_dropped=dropped,
    )


def write_long(ds: RepeatedMeasuresDataset, target) -> None:
    """Write a dataset as a long-format CSV (inverse of ``load_long``).

    Subject ids are synthesized as ``"<group>-<j>"``; values use Python's
    shortest round-trip float representation so load_long(write_long(ds))
    reproduces the dataset bit-identically.
    """
    stream, owned = _open_target(target)
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["subject", "group", "time", *ds.variable_labels])
        p = ds.n_variables
        for i, group in enumerate(ds.group_labels):
            for j in range(ds.group_sizes[i]):
                vector = ds.groups[i][j]
                for k, time in enumerate(ds.time_labels):
                    cells = [repr(float(vector[k * p + s])) for s in range(p)]
                    writer.writerow([f"{group}-{j + 1}", group, time, *cells])
    finally:
        if owned:
            stream.close()


def write_wide(ds: RepeatedMeasuresDataset, target) -> None:
    """Write a dataset as a wide-format CSV (inverse of ``load_wide``)."""
    stream, owned = _open_target(target)
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["group", *ds.column_labels()])
        for i, group in enumerate(ds.group_labels):
            for j in range(ds.group_sizes[i]):
                writer.writerow([group, *(repr(float(v)) for v in ds.groups[i][j])])
    finally:
        if owned:
            stream.close()


def _open_target(target):
    if isinstance(target, (str, Path)):
        return open(target, "w", newline=""), True
    return target, False


def drop_variable(ds: RepeatedMeasuresDataset, name: str) -> RepeatedMeasuresDataset:
    """Remove one variable at every time point (the only valid removal).

    Returns a new dataset with p-1 variables in their original relative
    order; the input is unchanged.  Raises ``DataError`` for an unknown
    name or when only one variable remains.
    """
    if name not in ds.variable_labels:
        raise DataError(f"unknown variable {name!r}; have {list(ds.variable_labels)}")
    if ds.n_variables < 2:
        raise DataError("cannot drop the last remaining variable")
    p = ds.n_variables
    keep_vars = [s for s, var in enumerate(ds.variable_labels) if var != name]
    keep_cols = [k * p + s for k in range(ds.n_times) for s in keep_vars]
    return replace(
        ds,
        variable_labels=tuple(ds.variable_labels[s] for s in keep_vars),
        groups=tuple(block[:, keep_cols] for block in ds.groups),
    )


def select_time(ds: RepeatedMeasuresDataset, time: str) -> RepeatedMeasuresDataset:
    """Slice out a single time point (for separate per-time analyses)."""
    if time not in ds.time_labels:
        raise DataError(f"unknown time {time!r}; have {list(ds.time_labels)}")
    k = ds.time_labels.index(time)
    p = ds.n_variables
    cols = [k * p + s for s in range(p)]
    return replace(
        ds,
        time_labels=(time,),
        groups=tuple(block[:, cols] for block in ds.groups),
    )
