"""The generic power-law time model and its flat parameter layout.

Predicted iteration time for one trial::

    t = (sum_i a_i * I_i**p_i + sum_g a_{g, level_g}) * prod_j E_j**q_j + C

Categorical groups contribute one coefficient per selected level and carry no
power. The flat vector layout, fixed by the schema, is

    [a_1, p_1, ..., a_n, p_n,  a_{g1,l1}, a_{g1,l2}, ...,  q_1, ..., q_m,  C]
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from perfmodel.errors import ConfigError, EvaluationError
from perfmodel.schema import Assignment, ParamSchema

COEF_BOUNDS = (0.0, 1000.0)
POWER_BOUNDS = (-5.0, 5.0)


def dimension(schema: ParamSchema) -> int:
    n_levels = sum(len(c.levels) for c in schema.intrinsic_categorical)
    return 2 * len(schema.intrinsic_numeric) + n_levels + len(schema.extrinsic) + 1


def slot_names(schema: ParamSchema) -> list[str]:
    """Human-readable label for every flat slot, e.g. ``kernel_size.p`` or ``activation=relu.a``."""
    names = []
    for n in schema.numeric_names:
        names += [f"{n}.a", f"{n}.p"]
    for c in schema.intrinsic_categorical:
        names += [f"{c.name}={lvl}.a" for lvl in c.levels]
    names += [f"{n}.q" for n in schema.extrinsic_names]
    names.append("C")
    return names


def slot_kinds(schema: ParamSchema) -> list[str]:
    """Role of each slot: ``a`` (coefficient), ``p``/``q`` (powers) or ``C``."""
    kinds = ["a", "p"] * len(schema.intrinsic_numeric)
    kinds += ["a"] * sum(len(c.levels) for c in schema.intrinsic_categorical)
    kinds += ["q"] * len(schema.extrinsic)
    kinds.append("C")
    return kinds


def _offsets(schema: ParamSchema) -> tuple[int, int, int]:
    n_num = len(schema.intrinsic_numeric)
    cat0 = 2 * n_num
    ext0 = cat0 + sum(len(c.levels) for c in schema.intrinsic_categorical)
    c_idx = ext0 + len(schema.extrinsic)
    return cat0, ext0, c_idx


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Model parameters for one schema, stored as the flat layout vector."""

    schema: ParamSchema
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != dimension(self.schema):
            raise ConfigError(
                f"parameter vector has {v.size} slots, schema needs {dimension(self.schema)}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.schema == other.schema and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"ParamVector({dict(zip(slot_names(self.schema), self.values.tolist()))})"

    @property
    def numeric_terms(self) -> dict[str, tuple[float, float]]:
        v = self.values
        return {n: (float(v[2 * i]), float(v[2 * i + 1]))
                for i, n in enumerate(self.schema.numeric_names)}

    @property
    def categorical_terms(self) -> dict[str, dict[str, float]]:
        cat0, _, _ = _offsets(self.schema)
        out, k = {}, cat0
        for c in self.schema.intrinsic_categorical:
            out[c.name] = {lvl: float(self.values[k + j]) for j, lvl in enumerate(c.levels)}
            k += len(c.levels)
        return out

    @property
    def extrinsic_powers(self) -> dict[str, float]:
        _, ext0, _ = _offsets(self.schema)
        return {n: float(self.values[ext0 + j]) for j, n in enumerate(self.schema.extrinsic_names)}

    @property
    def constant(self) -> float:
        return float(self.values[-1])

    @classmethod
    def from_parts(cls, schema: ParamSchema, numeric: Mapping[str, Sequence[float]] = None,
                   categorical: Mapping[str, Mapping[str, float]] = None,
                   extrinsic: Mapping[str, float] = None, constant: float = 0.0) -> "ParamVector":
        """Build a vector from named parts; omitted entries default to zero."""
        numeric, categorical, extrinsic = numeric or {}, categorical or {}, extrinsic or {}
        for group, known in ((numeric, schema.numeric_names),
                             (categorical, schema.categorical_names),
                             (extrinsic, schema.extrinsic_names)):
            unknown = set(group) - set(known)
            if unknown:
                raise ConfigError(f"unknown parameters: {', '.join(sorted(unknown))}")
        flat = []
        for n in schema.numeric_names:
            a, p = numeric.get(n, (0.0, 0.0))
            flat += [a, p]
        for c in schema.intrinsic_categorical:
            levels = categorical.get(c.name, {})
            unknown = set(levels) - set(c.levels)
            if unknown:
                raise ConfigError(f"unknown levels for {c.name!r}: {sorted(unknown)}")
            flat += [levels.get(lvl, 0.0) for lvl in c.levels]
        flat += [extrinsic.get(n, 0.0) for n in schema.extrinsic_names]
        flat.append(constant)
        return cls(schema, np.array(flat, dtype=float))

    def to_dict(self) -> dict:
        return {
            "numeric": {n: {"a": a, "p": p} for n, (a, p) in self.numeric_terms.items()},
            "categorical": {g: {lvl: {"a": a} for lvl, a in levels.items()}
                            for g, levels in self.categorical_terms.items()},
            "extrinsic": {n: {"q": q} for n, q in self.extrinsic_powers.items()},
            "C": self.constant,
        }

    @classmethod
    def from_dict(cls, schema: ParamSchema, data: Mapping) -> "ParamVector":
        """Inverse of :meth:`to_dict`; every schema slot must be present."""
        try:
            numeric = {n: (float(data["numeric"][n]["a"]), float(data["numeric"][n]["p"]))
                       for n in schema.numeric_names}
            categorical = {
                c.name: {lvl: float(data["categorical"][c.name][lvl]["a"]) for lvl in c.levels}
                for c in schema.intrinsic_categorical
            }
            extrinsic = {n: float(data["extrinsic"][n]["q"]) for n in schema.extrinsic_names}
            constant = float(data["C"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"model JSON does not match schema: missing or bad {exc}") from exc
        extra = (set(data.get("numeric", {})) - set(schema.numeric_names)) \
            | (set(data.get("categorical", {})) - set(schema.categorical_names)) \
            | (set(data.get("extrinsic", {})) - set(schema.extrinsic_names))
        if extra:
            raise ConfigError(f"model JSON has parameters not in schema: {sorted(extra)}")
        return cls.from_parts(schema, numeric, categorical, extrinsic, constant)


def flatten(x: ParamVector) -> np.ndarray:
    return x.values.copy()


def unflatten(schema: ParamSchema, flat) -> ParamVector:
    return ParamVector(schema, flat)


@dataclass(frozen=True, eq=False)
class Bounds:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float).reshape(-1)
        hi = np.array(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ConfigError("lower and upper bounds differ in length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigError("bounds must be finite")
        if np.any(lo >= hi):
            bad = int(np.argmax(lo >= hi))
            raise ConfigError(f"bound {bad}: lower {lo[bad]} is not below upper {hi[bad]}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __len__(self):
        return self.lo.size

    def __eq__(self, other):
        return (isinstance(other, Bounds) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.lo.tolist(), self.hi.tolist()))

    @classmethod
    def from_pairs(cls, pairs) -> "Bounds":
        pairs = list(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.lo) & (x <= self.hi)))


def default_bounds(schema: ParamSchema, coef=COEF_BOUNDS, power=POWER_BOUNDS) -> Bounds:
    """Coefficients and C in ``coef``, powers in ``power``, per slot in layout order."""
    pairs = [coef if k in ("a", "C") else power for k in slot_kinds(schema)]
    return Bounds.from_pairs(pairs)


def evaluate(schema: ParamSchema, x: ParamVector, record: Assignment) -> float:
    """Predicted time (ms) for one trial."""
    if x.schema != schema:
        raise ConfigError("parameter vector was built for a different schema")
    try:
        intrinsic = 0.0
        for name, (a, p) in x.numeric_terms.items():
            intrinsic += a * record.numeric_values[name] ** p
        for group, levels in x.categorical_terms.items():
            intrinsic += levels[record.categorical_values[group]]
        scale = 1.0
        for name, q in x.extrinsic_powers.items():
            scale *= record.extrinsic_values[name] ** q
        t = intrinsic * scale + x.constant
    except OverflowError:
        t = math.inf
    if not math.isfinite(t):
        raise EvaluationError(f"non-finite prediction for {record!r}")
    return t


class Design:
    """Encoding of many trials for evaluating whole populations at once.

    Parameter domains are small, so powers are computed once per distinct
    value (or per distinct extrinsic combination) and then gathered per record.
    """

    def __init__(self, schema: ParamSchema, items: Sequence[Assignment]):
        self.schema = schema
        n = len(items)
        self.n_records = n
        self.numeric = []  # per numeric parameter: (log of distinct values, record -> value index)
        for name in schema.numeric_names:
            col = np.array([it.numeric_values[name] for it in items], dtype=float)
            uniq, inv = np.unique(col, return_inverse=True)
            self.numeric.append((np.log(uniq), inv.reshape(-1)))
        ext = np.array([[it.extrinsic_values[k] for k in schema.extrinsic_names] for it in items],
                       dtype=float).reshape(n, len(schema.extrinsic))
        if n and ext.shape[1]:
            uniq, inv = np.unique(ext, axis=0, return_inverse=True)
            self.log_extrinsic, self.extrinsic_index = np.log(uniq), inv.reshape(-1)
        else:
            self.log_extrinsic, self.extrinsic_index = None, None
        self.cat0, self.ext0, self.c_idx = _offsets(schema)
        # flat slot of the selected level, one column per categorical group
        slots = []
        col = self.cat0
        for c in schema.intrinsic_categorical:
            index = {lvl: col + j for j, lvl in enumerate(c.levels)}
            slots.append([index[it.categorical_values[c.name]] for it in items])
            col += len(c.levels)
        self.level_slots = [np.array(s, dtype=np.int64) for s in slots]

    def predict(self, population) -> np.ndarray:
        """Predictions for a (P, M) population; returns a (P, N) array.

        Non-finite entries are returned as is; callers decide how to fail.
        """
        return self.predict_t(population).T

    def predict_t(self, population) -> np.ndarray:
        """Like :meth:`predict` but record-major, shape (N, P)."""
        XT = np.ascontiguousarray(np.atleast_2d(np.asarray(population, dtype=float)).T)
        out = np.zeros((self.n_records, XT.shape[1]))
        with np.errstate(over="ignore", invalid="ignore"):
            for slots in self.level_slots:
                out += XT[slots]
            for i, (log_u, inv) in enumerate(self.numeric):
                terms = XT[2 * i] * np.exp(log_u[:, None] * XT[2 * i + 1])
                out += terms[inv]
            if self.log_extrinsic is not None:
                scale = np.exp(self.log_extrinsic @ XT[self.ext0:self.c_idx])
                out *= scale[self.extrinsic_index]
            out += XT[self.c_idx]
        return out
