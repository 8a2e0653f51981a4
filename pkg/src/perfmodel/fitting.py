"""Cost functions, multi-seed model fitting and regularization sweeps."""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from perfmodel.errors import (
    ConfigError,
    DataError,
    EvaluationError,
    NumericalError,
    OptimizerAbort,
)
from perfmodel.metrics import MetricsReport, r2
from perfmodel.model import Bounds, Design, ParamVector, default_bounds, dimension
from perfmodel.optimizer import DeConfig, minimize_multi
from perfmodel.schema import Dataset, ParamSchema

log = logging.getLogger(__name__)

REG_KINDS = ("none", "l1", "l2")
DEFAULT_LAMBDA = 0.001
DEFAULT_SEEDS = tuple(range(1, 11))
# The relative cost-spread stop fires on the constant-prediction plateau (all
# powers strongly negative), so fits run the whole generation budget by default.
FIT_DE_DEFAULTS = DeConfig(tol=0.0)


@dataclass(frozen=True)
class RegMode:
    kind: str = "none"
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if self.kind not in REG_KINDS:
            raise ConfigError(f"regularization must be one of {REG_KINDS}, got {self.kind!r}")
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")

    def normalized(self) -> "RegMode":
        """Collapse the no-op cases (kind none, or lambda 0) to ``RegMode('none', 0.0)``."""
        if self.kind == "none" or self.lam == 0:
            return RegMode("none", 0.0)
        return self

    def penalty(self, X: np.ndarray) -> np.ndarray:
        """Penalty per row of a (P, M) population; the last slot (C) is exempt."""
        reg = self.normalized()
        body = np.atleast_2d(X)[:, :-1]
        if reg.kind == "l1":
            return reg.lam * np.abs(body).sum(axis=1)
        if reg.kind == "l2":
            return reg.lam * (body ** 2).sum(axis=1)
        return np.zeros(body.shape[0])

    def to_dict(self) -> dict:
        reg = self.normalized()
        return {"kind": reg.kind, "lambda": reg.lam}


def _flat(schema: ParamSchema, x) -> np.ndarray:
    if isinstance(x, ParamVector):
        if x.schema != schema:
            raise ConfigError("parameter vector was built for a different schema")
        return x.values
    flat = np.asarray(x, dtype=float).reshape(-1)
    if flat.size != dimension(schema):
        raise ConfigError(f"vector has {flat.size} slots, schema needs {dimension(schema)}")
    return flat


def predict(schema: ParamSchema, x, items) -> np.ndarray:
    """Predicted times for a sequence of records or assignments."""
    design = items if isinstance(items, Design) else Design(schema, list(items))
    pred = design.predict(_flat(schema, x)[None, :])[0]
    bad = ~np.isfinite(pred)
    if bad.any():
        k = int(np.argmax(bad))
        raise EvaluationError(f"non-finite prediction for record {k + 1}")
    return pred


def _mae_columns(pred_t: np.ndarray, times: np.ndarray) -> np.ndarray:
    # pred_t is record-major (N, P) and is overwritten
    with np.errstate(invalid="ignore"):
        pred_t -= times[:, None]
        return np.abs(pred_t, out=pred_t).mean(axis=0)


def cost_mae(schema: ParamSchema, dataset: Dataset, x) -> float:
    """Mean absolute difference between measured and predicted times."""
    if len(dataset) == 0:
        raise ConfigError("cost is undefined on an empty dataset")
    pred_t = Design(schema, dataset.records).predict_t(_flat(schema, x)[None, :])
    bad = ~np.isfinite(pred_t[:, 0])
    if bad.any():
        raise EvaluationError(f"non-finite prediction for record {int(np.argmax(bad)) + 1}")
    return float(_mae_columns(pred_t, dataset.times)[0])


def cost_regularized(schema: ParamSchema, dataset: Dataset, x, reg: RegMode) -> float:
    flat = _flat(schema, x)
    reg = reg.normalized()
    base = cost_mae(schema, dataset, flat)
    if reg.kind == "none":
        return base
    return base + float(reg.penalty(flat[None, :])[0])


class FitObjective:
    """Vectorized regularized cost over a fixed dataset; maps a (P, M) population to (P,)."""

    def __init__(self, schema: ParamSchema, dataset: Dataset, reg: RegMode = RegMode()):
        if len(dataset) == 0:
            raise ConfigError("cannot fit an empty dataset")
        self.design = Design(schema, dataset.records)
        self.times = dataset.times
        self.reg = reg.normalized()

    def __call__(self, X):
        X = np.atleast_2d(X)
        cost = _mae_columns(self.design.predict_t(X), self.times)
        if self.reg.kind != "none":
            cost = cost + self.reg.penalty(X)
        return cost


@dataclass(frozen=True)
class FitConfig:
    de: DeConfig = FIT_DE_DEFAULTS
    bounds: Bounds | None = None  # None: default bounds for the schema
    reg: RegMode = RegMode()
    seeds: tuple[int, ...] = DEFAULT_SEEDS

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds in {list(self.seeds)}")

    def bounds_for(self, schema: ParamSchema) -> Bounds:
        b = self.bounds if self.bounds is not None else default_bounds(schema)
        if len(b) != dimension(schema):
            raise ConfigError(f"bounds have {len(b)} slots, schema needs {dimension(schema)}")
        return b


@dataclass
class SeedFit:
    seed: int
    vector: ParamVector
    cost: float
    generations: int
    converged: bool


@dataclass
class FitResult:
    """Outcome of fitting one dataset with several seeds.

    ``std`` uses the population convention (divide by the number of seeds).
    """

    schema: ParamSchema
    reg: RegMode
    seeds: tuple[int, ...]
    per_seed: list[SeedFit]
    mean: np.ndarray
    std: np.ndarray
    representative: ParamVector
    representative_seed: int
    representative_cost: float
    train_metrics: MetricsReport
    test_metrics: MetricsReport | None = None
    de: DeConfig = field(default_factory=DeConfig)

    @property
    def mean_vector(self) -> ParamVector:
        return ParamVector(self.schema, self.mean)

    @property
    def std_vector(self) -> ParamVector:
        return ParamVector(self.schema, self.std)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "regularization": self.reg.to_dict(),
            "de": {k: v for k, v in self.de.to_dict().items() if k != "seed"},
            "seeds": list(self.seeds),
            "representative": {
                "seed": self.representative_seed,
                "cost": self.representative_cost,
                "model": self.representative.to_dict(),
            },
            "aggregate": {
                "mean": self.mean_vector.to_dict(),
                "std": self.std_vector.to_dict(),
            },
            "per_seed": [
                {"seed": s.seed, "cost": s.cost, "generations": s.generations,
                 "converged": s.converged, "model": s.vector.to_dict()}
                for s in self.per_seed
            ],
            "metrics": {
                "train": self.train_metrics.to_dict(),
                "test": None if self.test_metrics is None else self.test_metrics.to_dict(),
            },
        }

    @classmethod
    def from_dict(cls, d) -> "FitResult":
        schema = ParamSchema.from_dict(d["schema"])
        reg_d = d.get("regularization", {"kind": "none", "lambda": 0.0})
        per_seed = [
            SeedFit(s["seed"], ParamVector.from_dict(schema, s["model"]), s["cost"],
                    s["generations"], s["converged"])
            for s in d["per_seed"]
        ]
        test = d["metrics"].get("test")
        return cls(
            schema=schema,
            reg=RegMode(reg_d["kind"], reg_d["lambda"]),
            seeds=tuple(d["seeds"]),
            per_seed=per_seed,
            mean=ParamVector.from_dict(schema, d["aggregate"]["mean"]).values,
            std=ParamVector.from_dict(schema, d["aggregate"]["std"]).values,
            representative=ParamVector.from_dict(schema, d["representative"]["model"]),
            representative_seed=d["representative"]["seed"],
            representative_cost=d["representative"]["cost"],
            train_metrics=MetricsReport.from_dict(d["metrics"]["train"]),
            test_metrics=None if test is None else MetricsReport.from_dict(test),
            de=DeConfig.from_dict(d["de"]) if "de" in d else FIT_DE_DEFAULTS,
        )


def fit(train: Dataset, test: Dataset | None, schema: ParamSchema,
        config: FitConfig = FitConfig(), *, workers: int = 1) -> FitResult:
    """Fit the model to ``train`` once per seed and aggregate.

    The representative vector is the seed with the lowest (regularized) cost.
    Metrics use raw predictions, without the penalty term.
    """
    if train.schema != schema or (test is not None and test.schema != schema):
        raise ConfigError("datasets were built for a different schema")
    if len(train) == 0:
        raise ConfigError("cannot fit an empty training set")
    bounds = config.bounds_for(schema)
    reg = config.reg.normalized()
    objective = FitObjective(schema, train, reg)
    try:
        results = minimize_multi(objective, bounds, config.de, config.seeds,
                                 vectorized=True, workers=workers)
    except OptimizerAbort:
        # re-run sequentially to attribute the abort to a seed
        for seed in config.seeds:
            try:
                minimize_multi(objective, bounds, config.de, [seed], vectorized=True)
            except OptimizerAbort as exc:
                raise OptimizerAbort(f"seed {seed}: {exc}", vector=exc.vector) from exc
        raise

    per_seed = [SeedFit(r.seed, ParamVector(schema, r.best_x), r.best_cost,
                        r.generations_run, r.converged) for r in results]
    stack = np.array([r.best_x for r in results])
    best = min(range(len(per_seed)), key=lambda i: per_seed[i].cost)
    rep = per_seed[best].vector

    train_metrics = MetricsReport.compute(train.times, predict(schema, rep, train.records))
    test_metrics = None
    if test is not None and len(test):
        test_metrics = MetricsReport.compute(test.times, predict(schema, rep, test.records))
    log.info("fit %s: best seed %d cost %.6g; train %s", reg.to_dict(), per_seed[best].seed,
             per_seed[best].cost, train_metrics.summary())
    return FitResult(
        schema=schema,
        reg=reg,
        seeds=config.seeds,
        per_seed=per_seed,
        mean=stack.mean(axis=0),
        std=stack.std(axis=0),
        representative=rep,
        representative_seed=per_seed[best].seed,
        representative_cost=per_seed[best].cost,
        train_metrics=train_metrics,
        test_metrics=test_metrics,
        de=config.de,
    )


@dataclass
class SweepEntry:
    lam: float
    r2: float | None
    result: FitResult

    @property
    def representative(self) -> ParamVector:
        return self.result.representative

    @property
    def mean(self) -> np.ndarray:
        return self.result.mean

    @property
    def std(self) -> np.ndarray:
        return self.result.std


def lambda_sweep(train: Dataset, test: Dataset | None, schema: ParamSchema, config: FitConfig,
                 lambdas: Sequence[float], *, kind: str | None = None,
                 workers: int = 1) -> list[SweepEntry]:
    """One full multi-seed fit per lambda, in input order.

    ``kind`` defaults to the config's regularization kind, or ``l2`` when that
    is ``none``. R^2 is measured on ``test`` (``train`` when no test set).
    """
    lambdas = [float(v) for v in lambdas]
    if not lambdas:
        raise ConfigError("lambda list is empty")
    if any(not v >= 0 for v in lambdas):
        raise ConfigError(f"lambdas must be >= 0, got {lambdas}")
    kind = kind or (config.reg.kind if config.reg.kind != "none" else "l2")
    evaluation = test if test is not None and len(test) else train

    def run(lam):
        cfg = dataclasses.replace(config, reg=RegMode(kind, lam))
        res = fit(train, test, schema, cfg)
        try:
            score = r2(evaluation.times, predict(schema, res.representative, evaluation.records))
        except (DataError, NumericalError):
            score = None
        return SweepEntry(lam, score, res)

    if workers > 1 and len(lambdas) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(run, lambdas))
    return [run(lam) for lam in lambdas]
