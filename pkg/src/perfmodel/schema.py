"""Parameter schemas, trial records and dataset I/O.

A schema declares three ordered groups of hyperparameters: numeric intrinsic
parameters (enter the time model as ``a * I**p``), categorical intrinsic
parameters (one additive coefficient per level) and extrinsic scaling
parameters (enter multiplicatively as ``E**q``).

Measured times are always in milliseconds.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from perfmodel.errors import ConfigError, ParseError, SchemaViolation

TIME_COLUMN = "time_ms"
REPS_KEY = "time_ms_reps"
TRIAL_ID_KEY = "trial_id"
DEFAULT_REPETITIONS = 3


@dataclass(frozen=True)
class NumericParam:
    name: str
    domain: tuple[float, ...]


@dataclass(frozen=True)
class CategoricalParam:
    name: str
    levels: tuple[str, ...]


def _positive(value) -> bool:
    return isinstance(value, (int, float)) and math.isfinite(value) and value > 0


@dataclass(frozen=True)
class ParamSchema:
    intrinsic_numeric: tuple[NumericParam, ...] = ()
    intrinsic_categorical: tuple[CategoricalParam, ...] = ()
    extrinsic: tuple[NumericParam, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "intrinsic_numeric", tuple(self.intrinsic_numeric))
        object.__setattr__(self, "intrinsic_categorical", tuple(self.intrinsic_categorical))
        object.__setattr__(self, "extrinsic", tuple(self.extrinsic))
        names = self.names
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"duplicate parameter names: {', '.join(dupes)}")
        for n in names:
            if not n or n == TIME_COLUMN or "," in n:
                raise ConfigError(f"invalid parameter name {n!r}")
        for p in self.intrinsic_numeric + self.extrinsic:
            if not p.domain:
                raise ConfigError(f"parameter {p.name!r} has an empty domain")
            bad = [v for v in p.domain if not _positive(v)]
            if bad:
                raise ConfigError(
                    f"parameter {p.name!r} domain must be strictly positive, got {bad}"
                )
        for c in self.intrinsic_categorical:
            if len(c.levels) < 2:
                raise ConfigError(f"categorical parameter {c.name!r} needs at least 2 levels")
            if len(set(c.levels)) != len(c.levels):
                raise ConfigError(f"categorical parameter {c.name!r} has duplicate levels")

    @property
    def numeric_names(self) -> list[str]:
        return [p.name for p in self.intrinsic_numeric]

    @property
    def categorical_names(self) -> list[str]:
        return [c.name for c in self.intrinsic_categorical]

    @property
    def extrinsic_names(self) -> list[str]:
        return [p.name for p in self.extrinsic]

    @property
    def names(self) -> list[str]:
        """All parameter names in column order: numeric, categorical, extrinsic."""
        return self.numeric_names + self.categorical_names + self.extrinsic_names

    def categorical(self, name: str) -> CategoricalParam:
        for c in self.intrinsic_categorical:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "intrinsic_numeric": [
                {"name": p.name, "domain": list(p.domain)} for p in self.intrinsic_numeric
            ],
            "intrinsic_categorical": [
                {"name": c.name, "levels": list(c.levels)} for c in self.intrinsic_categorical
            ],
            "extrinsic": [{"name": p.name, "domain": list(p.domain)} for p in self.extrinsic],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ParamSchema":
        unknown = set(data) - {"intrinsic_numeric", "intrinsic_categorical", "extrinsic"}
        if unknown:
            raise ConfigError(f"unknown schema sections: {', '.join(sorted(unknown))}")
        try:
            numeric = tuple(
                NumericParam(str(p["name"]), tuple(float(v) for v in p["domain"]))
                for p in data.get("intrinsic_numeric", [])
            )
            categorical = tuple(
                CategoricalParam(str(c["name"]), tuple(str(v) for v in c["levels"]))
                for c in data.get("intrinsic_categorical", [])
            )
            extrinsic = tuple(
                NumericParam(str(p["name"]), tuple(float(v) for v in p["domain"]))
                for p in data.get("extrinsic", [])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed schema entry: {exc!r}") from exc
        return cls(numeric, categorical, extrinsic)


def load_schema(path) -> ParamSchema:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"schema file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ParamSchema.from_dict(data)


def save_schema(schema: ParamSchema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


def default_schema() -> ParamSchema:
    """The LeNet-5 hyperparameter schema (kernel/pool size, filters, ...; GPUs and batch size)."""
    text = resources.files("perfmodel").joinpath("data/default_schema.json").read_text("utf-8")
    return ParamSchema.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Records


@dataclass(frozen=True)
class Assignment:
    """One point in parameter space, without a measurement."""

    numeric_values: Mapping[str, float]
    categorical_values: Mapping[str, str]
    extrinsic_values: Mapping[str, float]

    def as_row(self, schema: ParamSchema) -> dict:
        row = {n: self.numeric_values[n] for n in schema.numeric_names}
        row.update({n: self.categorical_values[n] for n in schema.categorical_names})
        row.update({n: self.extrinsic_values[n] for n in schema.extrinsic_names})
        return row


@dataclass(frozen=True)
class TrialRecord(Assignment):
    measured_time: float

    @property
    def assignment(self) -> Assignment:
        return Assignment(self.numeric_values, self.categorical_values, self.extrinsic_values)

    def as_row(self, schema: ParamSchema) -> dict:
        row = super().as_row(schema)
        row[TIME_COLUMN] = self.measured_time
        return row


def _parse_positive(raw, row, name) -> float:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        raise SchemaViolation("missing value", row, name)
    if isinstance(raw, bool):
        raise SchemaViolation(f"expected a number, got {raw!r}", row, name)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise SchemaViolation(f"expected a number, got {raw!r}", row, name) from None
    if not math.isfinite(value) or value <= 0:
        raise SchemaViolation(f"value must be finite and > 0, got {raw!r}", row, name)
    return value


def parse_assignment(schema: ParamSchema, raw: Mapping, row=None, extra=()) -> Assignment:
    """Validate a name -> value mapping against ``schema``.

    ``extra`` lists keys that are allowed besides the schema names (e.g. the
    time column). ``row`` is only used to label errors.
    """
    allowed = set(schema.names) | set(extra)
    for key in raw:
        if key not in allowed:
            raise SchemaViolation("unknown column", row, key)
    for name in schema.names:
        if name not in raw:
            raise SchemaViolation("missing value", row, name)
    numeric = {n: _parse_positive(raw[n], row, n) for n in schema.numeric_names}
    extrinsic = {n: _parse_positive(raw[n], row, n) for n in schema.extrinsic_names}
    categorical = {}
    for c in schema.intrinsic_categorical:
        level = raw[c.name]
        level = "" if level is None else str(level).strip()
        if level == "":
            raise SchemaViolation("missing value", row, c.name)
        if level not in c.levels:
            raise SchemaViolation(
                f"unknown level {level!r}; expected one of {list(c.levels)}", row, c.name
            )
        categorical[c.name] = level
    return Assignment(numeric, categorical, extrinsic)


def parse_record(schema: ParamSchema, raw: Mapping, row=None, time_column=TIME_COLUMN) -> TrialRecord:
    a = parse_assignment(schema, raw, row, extra=(time_column,))
    if time_column not in raw:
        raise SchemaViolation("missing value", row, time_column)
    t = _parse_positive(raw[time_column], row, time_column)
    return TrialRecord(a.numeric_values, a.categorical_values, a.extrinsic_values, t)


def check_conforms(schema: ParamSchema, item: Assignment, row=None) -> None:
    """Raise SchemaViolation unless ``item`` has exactly the schema's keys with valid values."""
    groups = (
        (item.numeric_values, schema.numeric_names),
        (item.categorical_values, schema.categorical_names),
        (item.extrinsic_values, schema.extrinsic_names),
    )
    for values, names in groups:
        extra = set(values) - set(names)
        if extra:
            raise SchemaViolation("unknown parameter", row, sorted(extra)[0])
        for n in names:
            if n not in values:
                raise SchemaViolation("missing value", row, n)
    for n in schema.numeric_names:
        if not _positive(item.numeric_values[n]):
            raise SchemaViolation("value must be finite and > 0", row, n)
    for n in schema.extrinsic_names:
        if not _positive(item.extrinsic_values[n]):
            raise SchemaViolation("value must be finite and > 0", row, n)
    for c in schema.intrinsic_categorical:
        if item.categorical_values[c.name] not in c.levels:
            raise SchemaViolation(f"unknown level {item.categorical_values[c.name]!r}", row, c.name)
    if isinstance(item, TrialRecord) and not _positive(item.measured_time):
        raise SchemaViolation("measured time must be > 0", row, TIME_COLUMN)


@dataclass(frozen=True)
class Dataset:
    schema: ParamSchema
    records: tuple[TrialRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for i, rec in enumerate(self.records, start=1):
            check_conforms(self.schema, rec, row=i)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.measured_time for r in self.records], dtype=float)


@dataclass(frozen=True)
class RawTrialGroup:
    """Repeated timings of one assignment, before median aggregation."""

    trial_id: str
    repetitions: tuple[float, ...]
    assignment: Assignment

    def __post_init__(self):
        object.__setattr__(self, "repetitions", tuple(float(t) for t in self.repetitions))


# ---------------------------------------------------------------------------
# Aggregation and splitting


def aggregate_repetitions(
    groups: Iterable[RawTrialGroup], expected_repetitions: int | None = None
) -> list[TrialRecord]:
    """Collapse each group to one record whose time is the median repetition.

    An even number of repetitions uses the mean of the two central values. When
    ``expected_repetitions`` is given every group must carry exactly that many.
    Returns the records; wrap them in a Dataset with the schema.
    """
    records = []
    for g in groups:
        if not g.repetitions:
            raise SchemaViolation("empty repetition list", g.trial_id, REPS_KEY)
        if expected_repetitions is not None and len(g.repetitions) != expected_repetitions:
            raise SchemaViolation(
                f"expected {expected_repetitions} repetitions, got {len(g.repetitions)}",
                g.trial_id,
                REPS_KEY,
            )
        a = g.assignment
        records.append(
            TrialRecord(
                a.numeric_values,
                a.categorical_values,
                a.extrinsic_values,
                float(statistics.median(g.repetitions)),
            )
        )
    return records


def aggregate_dataset(
    schema: ParamSchema, groups: Iterable[RawTrialGroup], expected_repetitions: int | None = None
) -> Dataset:
    return Dataset(schema, aggregate_repetitions(groups, expected_repetitions))


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle and partition into (train, test).

    The train part has ``round(N * train_fraction)`` records (halves round up).
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    if n == 0:
        raise ConfigError("cannot split an empty dataset")
    n_train = int(math.floor(n * train_fraction + 0.5))
    order = np.random.default_rng(seed).permutation(n)
    recs = dataset.records
    train = Dataset(dataset.schema, [recs[i] for i in order[:n_train]])
    test = Dataset(dataset.schema, [recs[i] for i in order[n_train:]])
    return train, test


# ---------------------------------------------------------------------------
# File I/O


def _infer_format(path: Path, fmt: str | None) -> str:
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt not in ("csv", "json"):
        raise ConfigError(f"{path}: unsupported format {fmt!r} (use csv or json)")
    return fmt


def _fmt_value(v) -> str:
    # repr of a float round-trips exactly
    return repr(float(v)) if isinstance(v, (int, float)) else str(v)


def _read_rows(path: Path, fmt: str) -> list[dict]:
    if not path.is_file():
        raise ParseError(f"file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, list) or not all(isinstance(o, dict) for o in data):
            raise ParseError(f"{path}: expected a JSON array of objects")
        return data
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{path}: empty CSV file (no header row)") from None
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise ParseError(f"{path}: duplicate column names in header")
    rows = []
    for i, values in enumerate(reader, start=1):
        if not values:
            continue
        if len(values) != len(header):
            raise ParseError(
                f"{path}: row {i} has {len(values)} fields, header has {len(header)}"
            )
        rows.append(dict(zip(header, values)))
    return rows


def _write_rows(path: Path, fmt: str, header: Sequence[str], rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path.write_text(json.dumps(list(rows), indent=1) + "\n", encoding="utf-8")
        return
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt_value(r[h]) for h in header])


def load_dataset(path, format: str | None = None, schema: ParamSchema | None = None,
                 time_column: str = TIME_COLUMN) -> Dataset:
    """Read a CSV or JSON dataset and validate every row against ``schema``.

    Rows are numbered from 1 (the first data row) in error messages.
    """
    if schema is None:
        raise ConfigError("load_dataset requires a schema")
    path = Path(path)
    fmt = _infer_format(path, format)
    rows = _read_rows(path, fmt)
    records = [parse_record(schema, r, row=i, time_column=time_column)
               for i, r in enumerate(rows, start=1)]
    return Dataset(schema, records)


def save_dataset(dataset: Dataset, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, format)
    header = dataset.schema.names + [TIME_COLUMN]
    _write_rows(path, fmt, header, [r.as_row(dataset.schema) for r in dataset.records])


def load_assignments(path, schema: ParamSchema, format: str | None = None,
                     ignore: Sequence[str] = (TIME_COLUMN,)) -> list[Assignment]:
    """Read parameter assignments; columns in ``ignore`` (a dataset's time column) are skipped."""
    path = Path(path)
    fmt = _infer_format(path, format)
    rows = _read_rows(path, fmt)
    return [parse_assignment(schema, r, row=i, extra=ignore) for i, r in enumerate(rows, start=1)]


def save_assignments(assignments: Sequence[Assignment], schema: ParamSchema, path,
                     format: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, format)
    _write_rows(path, fmt, schema.names, [a.as_row(schema) for a in assignments])


def load_raw_groups(path, schema: ParamSchema) -> list[RawTrialGroup]:
    """Read the raw-trial JSON form: objects with ``trial_id`` and ``time_ms_reps``."""
    path = Path(path)
    rows = _read_rows(path, "json")
    groups = []
    for i, r in enumerate(rows, start=1):
        r = dict(r)
        trial_id = str(r.pop(TRIAL_ID_KEY, i))
        reps = r.pop(REPS_KEY, None)
        if not isinstance(reps, list):
            raise SchemaViolation("expected a list of repetition times", i, REPS_KEY)
        reps = [_parse_positive(t, i, REPS_KEY) for t in reps]
        groups.append(RawTrialGroup(trial_id, tuple(reps), parse_assignment(schema, r, row=i)))
    return groups


def save_raw_groups(groups: Sequence[RawTrialGroup], schema: ParamSchema, path) -> None:
    rows = []
    for g in groups:
        row = {TRIAL_ID_KEY: g.trial_id}
        row.update(g.assignment.as_row(schema))
        row[REPS_KEY] = list(g.repetitions)
        rows.append(row)
    _write_rows(Path(path), "json", [], rows)
