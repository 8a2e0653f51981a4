"""Coefficient tables, scaling verdicts, scatter data and sweep tables."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from perfmodel.errors import ConfigError
from perfmodel.fitting import FitResult, SweepEntry, predict
from perfmodel.model import ParamVector, slot_kinds, slot_names
from perfmodel.schema import Dataset, ParamSchema

DEFAULT_TAU = 0.05
SCATTER_HEADER = ("measured_ms", "predicted_ms")

SUPERLINEAR = "superlinear"
IDEAL = "ideal"
SUBLINEAR = "sublinear"
NON_SCALING = "non-scaling"


def _num(v: float) -> str:
    if v != 0 and abs(v) < 0.01:
        return f"{v:.3g}"
    return f"{v:.2f}"


def _pm(mean: float, std: float) -> str:
    return f"{_num(mean)} ± {_num(std)}"


def _level_labels(schema: ParamSchema) -> dict[tuple[str, str], str]:
    """Row label per (group, level): the bare level unless it occurs in several groups."""
    counts: dict[str, int] = {}
    for c in schema.intrinsic_categorical:
        for lvl in c.levels:
            counts[lvl] = counts.get(lvl, 0) + 1
    return {(c.name, lvl): lvl if counts[lvl] == 1 else f"{c.name}={lvl}"
            for c in schema.intrinsic_categorical for lvl in c.levels}


def coefficient_rows(result: FitResult, schema: ParamSchema) -> list[dict]:
    """Table rows as dicts: section, parameter, role, mean, std.

    Sections are ``intrinsic`` (numeric a/p rows and categorical a rows),
    ``extrinsic`` (q) and ``constant`` (C).
    """
    mean = ParamVector(schema, result.mean)
    std = ParamVector(schema, result.std)
    rows = []
    sm, ss = mean.numeric_terms, std.numeric_terms
    for name in schema.numeric_names:
        rows.append(dict(section="intrinsic", parameter=name, role="a", mean=sm[name][0], std=ss[name][0]))
        rows.append(dict(section="intrinsic", parameter=name, role="p", mean=sm[name][1], std=ss[name][1]))
    labels = _level_labels(schema)
    cm, cs = mean.categorical_terms, std.categorical_terms
    for c in schema.intrinsic_categorical:
        for lvl in c.levels:
            rows.append(dict(section="intrinsic", parameter=labels[c.name, lvl], role="a",
                             mean=cm[c.name][lvl], std=cs[c.name][lvl]))
    qm, qs = mean.extrinsic_powers, std.extrinsic_powers
    for name in schema.extrinsic_names:
        rows.append(dict(section="extrinsic", parameter=name, role="q", mean=qm[name], std=qs[name]))
    rows.append(dict(section="constant", parameter="C", role="C", mean=mean.constant, std=std.constant))
    return rows


def coefficient_table(result: FitResult, schema: ParamSchema, fmt: str = "text") -> str:
    """Render mean ± std of every fitted slot.

    Text layout: an intrinsic block with ``a`` and ``p`` columns (categorical
    levels show ``-`` for p), then an extrinsic block with ``q``, then the
    constant term.
    """
    if not result.per_seed:
        raise ConfigError("fit result has no seeds")
    rows = coefficient_rows(result, schema)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "parameter", "role", "mean", "std"])
        for r in rows:
            w.writerow([r["section"], r["parameter"], r["role"], repr(r["mean"]), repr(r["std"])])
        return buf.getvalue()
    if fmt != "text":
        raise ConfigError(f"unknown table format {fmt!r}")

    table: list[tuple[str, str, str]] = [("Intrinsic parameters", "a", "p")]
    by_param: dict[str, dict[str, str]] = {}
    order = []
    for r in rows:
        if r["section"] != "intrinsic":
            continue
        if r["parameter"] not in by_param:
            by_param[r["parameter"]] = {}
            order.append(r["parameter"])
        by_param[r["parameter"]][r["role"]] = _pm(r["mean"], r["std"])
    for p in order:
        table.append((p, by_param[p].get("a", "-"), by_param[p].get("p", "-")))
    table.append(("Extrinsic parameters", "q", ""))
    table += [(r["parameter"], _pm(r["mean"], r["std"]), "") for r in rows if r["section"] == "extrinsic"]
    table.append(("Constant term", "C", ""))
    const = rows[-1]
    table.append(("", _pm(const["mean"], const["std"]), ""))

    w0 = max(len(t[0]) for t in table)
    w1 = max(len(t[1]) for t in table)
    lines = [f"{a:<{w0}}  {b:<{w1}}  {c}".rstrip() for a, b, c in table]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ScalingVerdict:
    parameter: str
    q_mean: float
    q_std: float
    classification: str
    tolerance: float = DEFAULT_TAU

    def to_dict(self) -> dict:
        return asdict(self)


def classify(q: float, tau: float = DEFAULT_TAU) -> str:
    """Scaling class of an extrinsic power.

    ``q`` within ``tau`` of -1 (inclusive) is ideal: time inversely proportional
    to the resource. Below that is superlinear, between -1 + tau and 0 is
    sublinear, and q >= 0 means the resource does not reduce time at all.
    """
    if tau < 0:
        raise ConfigError("tolerance must be >= 0")
    lo, hi = -1.0 - tau, -1.0 + tau
    if lo <= q <= hi:
        return IDEAL
    if q < lo:
        return SUPERLINEAR
    if q < 0:
        return SUBLINEAR
    return NON_SCALING


def scaling_report(result: FitResult, schema: ParamSchema,
                   tau: float = DEFAULT_TAU) -> list[ScalingVerdict]:
    if not schema.extrinsic:
        raise ConfigError("schema has no extrinsic parameters to classify")
    mean = ParamVector(schema, result.mean).extrinsic_powers
    std = ParamVector(schema, result.std).extrinsic_powers
    return [ScalingVerdict(n, mean[n], std[n], classify(mean[n], tau), tau)
            for n in schema.extrinsic_names]


def scaling_table(verdicts: Sequence[ScalingVerdict]) -> str:
    rows = [("Parameter", "Scaling power q", "Verdict")]
    rows += [(v.parameter, _pm(v.q_mean, v.q_std), v.classification) for v in verdicts]
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    return "\n".join(f"{a:<{w0}}  {b:<{w1}}  {c}" for a, b, c in rows) + "\n"


def scatter_data(result: FitResult, schema: ParamSchema, dataset: Dataset) -> list[tuple[float, float]]:
    """(measured, predicted) per record, predicted with the representative vector."""
    if dataset.schema != schema:
        raise ConfigError("dataset was built for a different schema")
    if not len(dataset):
        return []
    pred = predict(schema, result.representative, dataset.records)
    return list(zip(dataset.times.tolist(), pred.tolist()))


def write_scatter_csv(rows: Sequence[tuple[float, float]], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCATTER_HEADER)
        for m, p in rows:
            w.writerow([repr(float(m)), repr(float(p))])


def report_dict(result: FitResult, verdicts: Sequence[ScalingVerdict] | None = None) -> dict:
    d = result.to_dict()
    d["scaling"] = [v.to_dict() for v in verdicts or []]
    return d


def sweep_header(schema: ParamSchema) -> list[str]:
    return (["lambda", "r2", "test_mape", "sum_abs_numeric_a", "sum_abs_numeric_p",
             "sum_abs_categorical_a", "sum_abs_extrinsic_q", "sum_abs_non_constant", "C"]
            + [f"mean:{s}" for s in slot_names(schema)]
            + [f"std:{s}" for s in slot_names(schema)])


def sweep_rows(entries: Sequence[SweepEntry], schema: ParamSchema) -> list[list]:
    """One row per lambda; group sums are over the representative vector's magnitudes."""
    kinds = np.array(slot_kinds(schema))
    n_num = len(schema.intrinsic_numeric)
    numeric_a = np.zeros(len(kinds), dtype=bool)
    numeric_a[0:2 * n_num:2] = True
    categorical_a = (kinds == "a") & ~numeric_a
    rows = []
    for e in entries:
        v = np.abs(e.representative.values)
        test = e.result.test_metrics or e.result.train_metrics
        rows.append([
            e.lam, e.r2, test.mape,
            float(v[numeric_a].sum()), float(v[kinds == "p"].sum()),
            float(v[categorical_a].sum()), float(v[kinds == "q"].sum()),
            float(v[:-1].sum()), float(e.representative.constant),
            *e.mean.tolist(), *e.std.tolist(),
        ])
    return rows


def sweep_csv(entries: Sequence[SweepEntry], schema: ParamSchema) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(sweep_header(schema))
    for row in sweep_rows(entries, schema):
        w.writerow(["" if x is None else repr(float(x)) for x in row])
    return buf.getvalue()
