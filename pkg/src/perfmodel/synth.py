"""Random experiment design and synthetic timing data from a known model.

Sampling draws every parameter independently and uniformly from its declared
domain (or level list). Draw order for a fixed seed: one
``integers(0, len(domain), trials)`` call per parameter, in schema column order.

Generation evaluates a ground-truth ParamVector on each assignment, draws
``repetitions`` noisy timings per assignment, and keeps their median as the
measured time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from perfmodel.errors import ConfigError
from perfmodel.model import Bounds, ParamVector, default_bounds, evaluate, slot_names
from perfmodel.schema import (
    DEFAULT_REPETITIONS,
    Assignment,
    Dataset,
    ParamSchema,
    RawTrialGroup,
    aggregate_repetitions,
)

NOISE_KINDS = ("none", "gaussian_relative")
NOISE_CLIP = 5.0  # truncate relative noise at this many sigmas
MIN_TIME_FRACTION = 1e-3  # noisy times never drop below this fraction of the true time


@dataclass(frozen=True)
class SamplerConfig:
    schema: ParamSchema
    trials: int
    seed: int = 0

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")


def sample_configs(config: SamplerConfig) -> list[Assignment]:
    schema, n = config.schema, int(config.trials)
    rng = np.random.default_rng(config.seed)
    columns = {}
    for p in schema.intrinsic_numeric:
        columns[p.name] = [p.domain[i] for i in rng.integers(0, len(p.domain), n)]
    for c in schema.intrinsic_categorical:
        columns[c.name] = [c.levels[i] for i in rng.integers(0, len(c.levels), n)]
    for p in schema.extrinsic:
        columns[p.name] = [p.domain[i] for i in rng.integers(0, len(p.domain), n)]
    return [
        Assignment(
            {k: float(columns[k][r]) for k in schema.numeric_names},
            {k: columns[k][r] for k in schema.categorical_names},
            {k: float(columns[k][r]) for k in schema.extrinsic_names},
        )
        for r in range(n)
    ]


@dataclass(frozen=True)
class SynthConfig:
    ground_truth: ParamVector
    noise: str = "none"
    sigma: float = 0.0
    repetitions: int = DEFAULT_REPETITIONS
    seed: int = 0
    bounds: Bounds | None = None  # ground truth must lie inside; default bounds if None

    def __post_init__(self):
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"noise must be one of {NOISE_KINDS}, got {self.noise!r}")
        if not self.sigma >= 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if int(self.repetitions) < 1:
            raise ConfigError("repetitions must be >= 1")


def generate(assignments: Sequence[Assignment], schema: ParamSchema,
             config: SynthConfig) -> tuple[Dataset, list[RawTrialGroup]]:
    """Synthesize measured times; returns the aggregated dataset and the raw groups."""
    truth = config.ground_truth
    if truth.schema != schema:
        raise ConfigError("ground truth was built for a different schema")
    bounds = config.bounds or default_bounds(schema)
    if len(bounds) != len(truth.values):
        raise ConfigError("bounds do not match the schema")
    outside = np.flatnonzero((truth.values < bounds.lo) | (truth.values > bounds.hi))
    if outside.size:
        names = [slot_names(schema)[i] for i in outside]
        raise ConfigError(f"ground truth lies outside the fitting bounds at {names}")

    assignments = list(assignments)
    if not assignments:
        return Dataset(schema, []), []
    true_times = np.array([evaluate(schema, truth, a) for a in assignments])
    bad = np.flatnonzero(true_times <= 0)
    if bad.size:
        raise ConfigError(
            f"ground truth predicts a non-positive time ({true_times[bad[0]]}) "
            f"for assignment {bad[0] + 1}"
        )

    reps = int(config.repetitions)
    shape = (len(assignments), reps)
    if config.noise == "none":
        times = np.repeat(true_times[:, None], reps, axis=1)
    else:
        rng = np.random.default_rng(config.seed)
        eps = np.clip(config.sigma * rng.standard_normal(shape),
                      -NOISE_CLIP * config.sigma, NOISE_CLIP * config.sigma)
        times = true_times[:, None] * (1.0 + eps)
        times = np.maximum(times, MIN_TIME_FRACTION * true_times[:, None])

    width = max(5, len(str(len(assignments))))
    groups = [
        RawTrialGroup(f"trial-{k + 1:0{width}d}", tuple(times[k].tolist()), a)
        for k, a in enumerate(assignments)
    ]
    return Dataset(schema, aggregate_repetitions(groups)), groups


def default_ground_truth(schema: ParamSchema) -> ParamVector:
    """Reference model shipped for the default LeNet-5 schema."""
    text = resources.files("perfmodel").joinpath("data/default_truth.json").read_text("utf-8")
    return ParamVector.from_dict(schema, json.loads(text))
