"""Bounded differential evolution (DE/best/1/bin) over flat real vectors.

Generation-synchronous variant: every trial vector of a generation is built
from the same parent population, the whole batch is evaluated, and then each
trial replaces its parent if its cost is not worse. No local polishing step is
applied afterwards.

Random stream layout (``numpy.random.Generator(PCG64(seed))``), in draw order:

1. ``random((P, D))`` -- initial population, uniform inside the bounds.
2. Per generation:
   a. ``uniform(*mutation)`` -- dithered mutation factor F;
   b. ``integers(0, P-1, P)``, ``integers(0, P-2, P)``, ``integers(0, P-3, P)``
      -- three distinct donor indices per individual, each excluding the
      individual itself and the previously drawn donors;
   c. ``random((P, D))`` -- binomial crossover draws;
   d. ``integers(0, D, P)`` -- gene always taken from the mutant.

The stream is consumed identically for every strategy so results depend only on
(seed, config, objective).
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from perfmodel.errors import ConfigError, OptimizerAbort
from perfmodel.model import Bounds

log = logging.getLogger(__name__)

MIN_POPULATION = 15


@dataclass(frozen=True)
class DeConfig:
    strategy: str = "best1bin"
    pop_multiplier: int = 15
    mutation: tuple[float, float] = (0.5, 1.0)
    recombination: float = 0.7
    max_generations: int = 1000
    tol: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mutation", tuple(float(m) for m in self.mutation))
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"unknown DE strategy {self.strategy!r}; available: {sorted(STRATEGIES)}"
            )
        if int(self.pop_multiplier) < 1:
            raise ConfigError("pop_multiplier must be a positive integer")
        lo, hi = self.mutation
        if not (0.0 < lo < hi < 2.0):
            raise ConfigError(f"mutation interval must satisfy 0 < lo < hi < 2, got {self.mutation}")
        if not 0.0 < self.recombination <= 1.0:
            raise ConfigError(f"recombination must lie in (0, 1], got {self.recombination}")
        if int(self.max_generations) < 1:
            raise ConfigError("max_generations must be a positive integer")
        if self.tol < 0:
            raise ConfigError("tol must be non-negative")

    def population_size(self, dim: int) -> int:
        return max(self.pop_multiplier * dim, MIN_POPULATION)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mutation"] = list(self.mutation)
        return d

    @classmethod
    def from_dict(cls, data) -> "DeConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown DE options: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class DeResult:
    best_x: np.ndarray
    best_cost: float
    generations_run: int
    cost_trace: list[float] = field(default_factory=list)
    converged: bool = False
    seed: int = 0
    n_evaluations: int = 0

    def __eq__(self, other):
        if not isinstance(other, DeResult):
            return NotImplemented
        return (np.array_equal(self.best_x, other.best_x) and self.best_cost == other.best_cost
                and self.generations_run == other.generations_run
                and self.cost_trace == other.cost_trace and self.converged == other.converged
                and self.seed == other.seed)


def _best1(pop, best, donors, F):
    return pop[best] + F * (pop[donors[:, 0]] - pop[donors[:, 1]])


def _rand1(pop, best, donors, F):
    return pop[donors[:, 0]] + F * (pop[donors[:, 1]] - pop[donors[:, 2]])


# name -> mutation operator; crossover is always binomial
STRATEGIES: dict[str, Callable] = {"best1bin": _best1, "rand1bin": _rand1}


def _draw_donors(rng: np.random.Generator, P: int) -> np.ndarray:
    """Three mutually distinct indices per row, none equal to the row index."""
    taken = np.arange(P)[:, None]
    donors = np.empty((P, 3), dtype=np.int64)
    for k in range(3):
        r = rng.integers(0, P - 1 - k, size=P)
        # skip over already-used indices in ascending order
        for used in np.sort(taken, axis=1).T:
            r = r + (r >= used)
        donors[:, k] = r
        taken = np.concatenate([taken, r[:, None]], axis=1)
    return donors


def reflect(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Mirror out-of-bound coordinates back across the violated bound, then clip."""
    x = np.where(x < lo, 2 * lo - x, np.where(x > hi, 2 * hi - x, x))
    return np.clip(x, lo, hi)


def _as_batch_objective(objective, vectorized: bool):
    if vectorized:
        return lambda X: np.asarray(objective(X), dtype=float).reshape(-1)
    return lambda X: np.array([float(objective(row)) for row in X])


def minimize(objective, bounds: Bounds, config: DeConfig = DeConfig(), *,
             vectorized: bool = False,
             on_evaluate: Callable[[np.ndarray], None] | None = None) -> DeResult:
    """Minimize ``objective`` inside a box with differential evolution.

    Parameters
    ----------
    objective : callable
        ``f(x) -> float`` for a 1-D vector, or ``f(X) -> (P,)`` for a 2-D
        population when ``vectorized`` is true. Must be pure.
    bounds : Bounds
        Finite box; the dimension is ``len(bounds)``.
    config : DeConfig
        Hyperparameters and seed.
    on_evaluate : callable, optional
        Called with every batch of vectors right before it is evaluated.
        Meant for instrumentation in tests.

    Raises
    ------
    OptimizerAbort
        If the objective returns a non-finite value; the offending vector is
        attached as ``exc.vector``.
    """
    if not isinstance(bounds, Bounds):
        bounds = Bounds.from_pairs(bounds)
    lo, hi = bounds.lo, bounds.hi
    D = len(bounds)
    P = config.population_size(D)
    mutate = STRATEGIES[config.strategy]
    batch_cost = _as_batch_objective(objective, vectorized)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n_eval = 0

    def evaluate(X):
        nonlocal n_eval
        if on_evaluate is not None:
            on_evaluate(X)
        costs = batch_cost(X)
        n_eval += X.shape[0]
        if costs.shape != (X.shape[0],):
            raise ConfigError(f"objective returned shape {costs.shape}, expected ({X.shape[0]},)")
        bad = ~np.isfinite(costs)
        if bad.any():
            vec = X[int(np.argmax(bad))].copy()
            raise OptimizerAbort(
                f"objective returned {costs[bad][0]} at x = {vec.tolist()}", vector=vec
            )
        return costs

    pop = lo + rng.random((P, D)) * (hi - lo)
    costs = evaluate(pop)
    best = int(np.argmin(costs))
    trace = [float(costs[best])]
    converged = False
    generations = 0

    for generations in range(1, config.max_generations + 1):
        F = rng.uniform(*config.mutation)
        donors = _draw_donors(rng, P)
        cross = rng.random((P, D)) < config.recombination
        forced = rng.integers(0, D, size=P)
        cross[np.arange(P), forced] = True

        mutant = mutate(pop, best, donors, F)
        trials = reflect(np.where(cross, mutant, pop), lo, hi)
        trial_costs = evaluate(trials)

        accept = trial_costs <= costs
        pop[accept] = trials[accept]
        costs[accept] = trial_costs[accept]
        best = int(np.argmin(costs))
        trace.append(float(costs[best]))

        if np.std(costs) <= config.tol * abs(np.mean(costs)):
            converged = True
            break

    log.debug("DE seed=%s: %d generations, best cost %.6g, converged=%s",
              config.seed, generations, trace[-1], converged)
    return DeResult(
        best_x=pop[best].copy(),
        best_cost=float(costs[best]),
        generations_run=generations,
        cost_trace=trace,
        converged=converged,
        seed=config.seed,
        n_evaluations=n_eval,
    )


def minimize_multi(objective, bounds: Bounds, config: DeConfig, seeds: Sequence[int], *,
                   vectorized: bool = False, workers: int = 1) -> list[DeResult]:
    """One independent :func:`minimize` run per seed, returned in seed order."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"duplicate seeds in {seeds}")

    def run(seed):
        return minimize(objective, bounds, dataclasses.replace(config, seed=seed),
                        vectorized=vectorized)

    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(run, seeds))
    return [run(s) for s in seeds]
