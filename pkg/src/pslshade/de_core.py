"""LSHADE: success-history adaptive differential evolution with LPSR.

Implements the algorithm of Tanabe & Fukunaga (2014): current-to-pbest/1
mutation, binomial crossover, greedy selection, an external archive of
replaced parents, success-history parameter adaptation with weighted Lehmer
means and a terminal crossover-rate mark, and linear population size
reduction driven by the evaluation count.

The generation loop is written in batch form over the whole population.  The
trial-generation routine accepts a trial count per parent so that screening
variants can reuse it; with one trial per parent it reduces exactly to the
plain LSHADE operators, consuming the random stream identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._util import round_half_away
from .benchmark import ConfigurationError, SearchBounds
from .metrics import hyper_volume

__all__ = [
    "ControlParams",
    "Individual",
    "Population",
    "ParameterMemory",
    "ExternalArchive",
    "TrialBatch",
    "GenerationStats",
    "LshadeEngine",
    "mutate",
    "crossover",
    "select",
    "repair_box",
    "lpsr_next_size",
    "weighted_lehmer",
    "sample_F",
    "sample_CR",
    "shrink_population",
    "generate_trial_batch",
]

_F_SCALE = 0.1
_CR_SCALE = 0.1
_F_MAX_RETRIES = 100


@dataclass
class ControlParams:
    """Run-level control parameters; defaults follow common LSHADE practice."""

    n_init: int
    n_min: int
    max_nfe: int
    best_rate: float = 0.11
    archive_rate: float = 1.4
    memory_size: int = 5
    f_init: float = 0.5
    cr_init: float = 0.5

    def __post_init__(self):
        if self.n_init < self.n_min or self.n_min < 4:
            raise ConfigurationError("population sizes must satisfy n_init >= n_min >= 4")
        if self.max_nfe <= 0:
            raise ConfigurationError("evaluation budget must be positive")

    @classmethod
    def for_dimension(cls, dimension: int, max_nfe: int, **overrides) -> "ControlParams":
        return cls(n_init=18 * dimension, n_min=4, max_nfe=max_nfe, **overrides)


class Individual(NamedTuple):
    position: np.ndarray
    fitness: float


@dataclass
class Population:
    positions: np.ndarray
    fitness: np.ndarray
    generation: int

    @property
    def size(self) -> int:
        return len(self.fitness)


# ---------------------------------------------------------------------------
# operators

def mutate(x, x_pbest, x_r1, x_r2, f: float) -> np.ndarray:
    """current-to-pbest/1 mutant, before bound repair."""
    x = np.asarray(x, dtype=float)
    return x + f * (np.asarray(x_pbest) - x) + f * (np.asarray(x_r1) - np.asarray(x_r2))


def crossover(parent, mutant, cr: float, d_rand: int, draws) -> np.ndarray:
    """Binomial crossover; coordinate d_rand always comes from the mutant."""
    parent = np.asarray(parent, dtype=float)
    mutant = np.asarray(mutant, dtype=float)
    draws = np.asarray(draws, dtype=float)
    take = draws <= cr
    take[d_rand] = True
    return np.where(take, mutant, parent)


def repair_box(value, parent, lower, upper):
    """Midpoint repair: an out-of-bounds coordinate moves halfway back to its parent."""
    value = np.asarray(value, dtype=float)
    low = np.where(value < lower, 0.5 * (parent + lower), value)
    return np.where(low > upper, 0.5 * (parent + upper), low)


def select(parent: Individual, trial: Individual, archive=None, rng=None) -> Individual:
    """Greedy selection: the trial wins only on strict improvement.

    On replacement the parent position enters the external archive (when one
    is supplied); an exact fitness tie keeps the parent and leaves the
    archive untouched.
    """
    if not (np.isfinite(parent.fitness) and np.isfinite(trial.fitness)):
        raise ValueError("selection requires evaluated, finite fitness values")
    if trial.fitness < parent.fitness:
        if archive is not None:
            archive.insert(parent.position, rng)
        return trial
    return parent


def lpsr_next_size(params: ControlParams, nfe: int) -> int:
    """Linear population size schedule at a given evaluation count."""
    slope = (params.n_min - params.n_init) / params.max_nfe
    size = round_half_away(slope * nfe + params.n_init)
    return max(params.n_min, min(params.n_init, size))


def weighted_lehmer(successes) -> float:
    """Improvement-weighted Lehmer mean of (value, delta_f) pairs."""
    pairs = list(successes)
    if not pairs:
        raise ValueError("weighted Lehmer mean of an empty success set")
    values = np.array([p[0] for p in pairs], dtype=float)
    deltas = np.array([p[1] for p in pairs], dtype=float)
    weights = deltas / deltas.sum()
    return float(np.sum(weights * values**2) / np.sum(weights * values))


def sample_F(m_f: float, rng, max_retries: int = _F_MAX_RETRIES) -> float:
    """Cauchy(m_f, 0.1) draw, truncated above 1, redrawn while non-positive."""
    for _ in range(max_retries):
        f = m_f + _F_SCALE * rng.standard_cauchy()
        if f > 1.0:
            return 1.0
        if f > 0.0:
            return float(f)
    return float(m_f)


def sample_CR(m_cr: Optional[float], rng) -> float:
    """Normal(m_cr, 0.1) clipped to [0, 1]; a terminal slot (None) forces 0."""
    if m_cr is None:
        return 0.0
    return float(np.clip(rng.normal(m_cr, _CR_SCALE), 0.0, 1.0))


def _sample_f_batch(locs, rng, n_s, max_retries=_F_MAX_RETRIES):
    """Batched scaling-factor draws, same truncate/redraw rule as sample_F."""
    locs2 = np.broadcast_to(locs[:, None], (locs.size, n_s))
    f = locs2 + _F_SCALE * rng.standard_cauchy((locs.size, n_s))
    f = np.minimum(f, 1.0)
    invalid = f <= 0.0
    for _ in range(max_retries):
        if not invalid.any():
            break
        redraw = locs2[invalid] + _F_SCALE * rng.standard_cauchy(int(invalid.sum()))
        f[invalid] = np.minimum(redraw, 1.0)
        invalid = f <= 0.0
    if invalid.any():
        f[invalid] = locs2[invalid]
    return f


class ParameterMemory:
    """H-slot success history of (M_F, M_CR) pairs with a cyclic write cursor.

    A slot whose successful crossover rates were all zero is marked terminal
    permanently: it keeps forcing CR = 0 draws and is never overwritten.
    """

    def __init__(self, size: int, f_init: float = 0.5, cr_init: float = 0.5):
        self.size = size
        self.m_f = np.full(size, f_init)
        self.m_cr = np.full(size, cr_init)
        self.terminal = np.zeros(size, dtype=bool)
        self.cursor = 0

    def entry(self, k: int) -> tuple[float, Optional[float]]:
        return float(self.m_f[k]), None if self.terminal[k] else float(self.m_cr[k])

    def update(self, s_f, s_cr, deltas) -> None:
        """Record one generation's successes; empty sets leave the memory untouched."""
        s_f = np.asarray(s_f, dtype=float)
        s_cr = np.asarray(s_cr, dtype=float)
        deltas = np.asarray(deltas, dtype=float)
        if s_f.size == 0:
            return
        k = self.cursor
        self.m_f[k] = weighted_lehmer(zip(s_f, deltas))
        if not self.terminal[k]:
            if np.max(s_cr) == 0.0:
                self.terminal[k] = True
            else:
                self.m_cr[k] = weighted_lehmer(zip(s_cr, deltas))
        self.cursor = (k + 1) % self.size


class ExternalArchive:
    """Bounded store of replaced parent positions used as extra mutation donors."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.entries: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.entries)

    def insert(self, position, rng) -> None:
        """Append, or overwrite a uniformly random entry when full."""
        position = np.array(position, dtype=float, copy=True)
        if self.capacity <= 0:
            return
        if len(self.entries) < self.capacity:
            self.entries.append(position)
        else:
            self.entries[int(rng.integers(len(self.entries)))] = position

    def resize(self, capacity: int, rng) -> None:
        """Shrink capacity, evicting uniformly random entries as needed."""
        self.capacity = capacity
        excess = len(self.entries) - capacity
        if excess > 0:
            keep = np.sort(rng.choice(len(self.entries), capacity, replace=False))
            self.entries = [self.entries[i] for i in keep]

    def as_array(self, dimension: int) -> np.ndarray:
        if not self.entries:
            return np.empty((0, dimension))
        return np.asarray(self.entries)


def shrink_population(pop: Population, new_size: int, archive: ExternalArchive = None,
                      archive_rate: float = None, rng=None) -> Population:
    """Keep the best ``new_size`` members (ties keep the lower index).

    When an archive is supplied its capacity is recomputed as
    floor(archive_rate * new_size) with random eviction down to it.
    """
    if not 0 < new_size <= pop.size:
        raise ValueError("new population size out of range")
    order = np.argsort(pop.fitness, kind="stable")[:new_size]
    order.sort()
    out = Population(pop.positions[order], pop.fitness[order], pop.generation)
    if archive is not None:
        archive.resize(int(np.floor(archive_rate * new_size)), rng)
    return out


# ---------------------------------------------------------------------------
# batched trial generation

@dataclass
class TrialBatch:
    """All trial vectors of one generation plus the draws that built them.

    Shapes: trials (N, n_s, D); f and the donor index arrays (N, n_s);
    cr, d_rand, memory_indices (N,); cross_draws (N, D).  Donor indices in
    r2 address the concatenation of the population and the external archive.
    """

    trials: np.ndarray
    f: np.ndarray
    cr: np.ndarray
    d_rand: np.ndarray
    cross_draws: np.ndarray
    memory_indices: np.ndarray
    pbest: np.ndarray
    r1: np.ndarray
    r2: np.ndarray

    @property
    def n_s(self) -> int:
        return self.trials.shape[1]


def generate_trial_batch(rng, positions, fitness, archive: ExternalArchive,
                         memory: ParameterMemory, params: ControlParams,
                         bounds: SearchBounds, n_s: int) -> TrialBatch:
    """Generate n_s trial vectors per parent.

    Per parent i: one memory slot r_i, one crossover rate, one forced
    coordinate and one vector of per-coordinate crossover draws are shared by
    all of its trials, while the scaling factor and the three donors are drawn
    independently per trial.  r1 excludes i; r2 (over population plus
    archive) excludes both i and r1.
    """
    n, d = positions.shape
    idx = np.arange(n)

    pool_size = max(2, round_half_away(params.best_rate * n))
    pool = np.argsort(fitness, kind="stable")[:pool_size]

    r = rng.integers(0, memory.size, n)
    cr = np.clip(rng.normal(memory.m_cr[r], _CR_SCALE), 0.0, 1.0)
    cr[memory.terminal[r]] = 0.0
    d_rand = rng.integers(0, d, n)
    cross_draws = rng.random((n, d))

    f = _sample_f_batch(memory.m_f[r], rng, n_s)

    pbest = pool[rng.integers(0, pool_size, (n, n_s))]
    r1 = rng.integers(0, n - 1, (n, n_s))
    r1 += r1 >= idx[:, None]
    total = n + len(archive)
    r2 = rng.integers(0, total - 2, (n, n_s))
    lo = np.minimum(idx[:, None], r1)
    hi = np.maximum(idx[:, None], r1)
    r2 += r2 >= lo
    r2 += r2 >= hi

    donors = np.concatenate([positions, archive.as_array(d)], axis=0)
    parents = positions[:, None, :]
    mutants = (
        parents
        + f[:, :, None] * (positions[pbest] - parents)
        + f[:, :, None] * (positions[r1] - donors[r2])
    )
    mutants = repair_box(mutants, parents, bounds.lower, bounds.upper)

    take = (cross_draws <= cr[:, None]) | (np.arange(d)[None, :] == d_rand[:, None])
    trials = np.where(take[:, None, :], mutants, parents)

    return TrialBatch(trials, f, cr, d_rand, cross_draws, r, pbest, r1, r2)


# ---------------------------------------------------------------------------
# engine

@dataclass
class GenerationStats:
    """Per-generation diagnostics emitted by the engine."""

    generation: int
    nfe: int
    pop_size: int
    best_value: float
    hypervolume: float
    n_success: int
    n_trials_per_parent: int
    n_evaluated: int = 0
    screening_accuracy: Optional[float] = None
    surrogate_r2: Optional[float] = None
    rank_correlation: Optional[float] = None
    sample_archive_size: Optional[int] = None


class LshadeEngine:
    """Step-wise LSHADE driver.

    The objective must expose ``evaluate(rows) -> values`` (budget-counted),
    ``remaining() -> int`` and ``nfe``; the harness's EvaluationBudget does.
    Calling ``run()`` initialises the population and iterates generations
    until the budget is exhausted.  All randomness flows through one
    generator seeded at construction, so equal seeds give equal runs.

    The population size is kept on the linear reduction schedule evaluated at
    the current evaluation count, including immediately after the initial
    evaluations, so every generation starts at the scheduled size.
    """

    def __init__(self, objective, bounds: SearchBounds, params: ControlParams,
                 seed, diagnostics: bool = False):
        self.objective = objective
        self.bounds = bounds
        self.params = params
        self.rng = np.random.default_rng(seed)
        self.diagnostics = diagnostics
        self.memory = ParameterMemory(params.memory_size, params.f_init, params.cr_init)
        self.archive = ExternalArchive(int(np.floor(params.archive_rate * params.n_init)))
        self.population: Optional[Population] = None
        self.generation = 0
        self.best_position: Optional[np.ndarray] = None
        self.best_value = np.inf
        self.trace: list[GenerationStats] = []

    # hooks overridden by screening variants ------------------------------

    def _initial_positions(self, n: int) -> np.ndarray:
        return self.rng.uniform(self.bounds.lower, self.bounds.upper,
                                (n, self.bounds.dimension))

    def _after_initial_evaluation(self, positions, values) -> None:
        pass

    def _prepare_generation(self) -> int:
        """Return the number of trials to generate per parent this generation."""
        return 1

    def _choose_trials(self, batch: TrialBatch):
        """Pick one trial per parent; returns (indices, surrogate scores or None)."""
        return np.zeros(len(batch.trials), dtype=int), None

    def _after_trial_evaluation(self, points, values) -> None:
        pass

    def _generation_diagnostics(self, batch, chosen_j, evaluated, chosen_values,
                                surrogate_scores):
        return None, None, None

    def _sample_archive_size(self) -> Optional[int]:
        return None

    # driver ---------------------------------------------------------------

    def initialize(self) -> None:
        if self.population is not None:
            raise RuntimeError("engine is already initialised")
        n = self.params.n_init
        if self.objective.remaining() < n:
            raise ConfigurationError("budget is smaller than the initial population")
        positions = self._initial_positions(n)
        values = np.asarray(self.objective.evaluate(positions))
        self._after_initial_evaluation(positions, values)
        self.population = Population(positions, values, generation=0)
        self._track_best()
        self._apply_lpsr()

    def step(self) -> GenerationStats:
        if self.population is None:
            raise RuntimeError("initialize() must run before step()")
        pop = self.population
        n = pop.size
        n_s = self._prepare_generation()
        batch = generate_trial_batch(
            self.rng, pop.positions, pop.fitness, self.archive,
            self.memory, self.params, self.bounds, n_s,
        )
        chosen_j, surrogate_scores = self._choose_trials(batch)
        chosen = batch.trials[np.arange(n), chosen_j]

        # a generation that would overshoot the budget is truncated: only the
        # first `evaluated` parents get trials, the rest keep their positions
        evaluated = min(n, self.objective.remaining())
        values = np.asarray(self.objective.evaluate(chosen[:evaluated]))
        self._after_trial_evaluation(chosen[:evaluated], values)

        improved = values < pop.fitness[:evaluated]
        deltas = pop.fitness[:evaluated][improved] - values[improved]
        for i in np.flatnonzero(improved):
            self.archive.insert(pop.positions[i], self.rng)
        s_f = batch.f[np.arange(evaluated), chosen_j[:evaluated]][improved]
        s_cr = batch.cr[:evaluated][improved]

        new_positions = pop.positions.copy()
        new_fitness = pop.fitness.copy()
        new_positions[:evaluated][improved] = chosen[:evaluated][improved]
        new_fitness[:evaluated][improved] = values[improved]

        self.memory.update(s_f, s_cr, deltas)
        self.generation += 1
        self.population = Population(new_positions, new_fitness, self.generation)
        self._track_best()
        self._apply_lpsr()

        accuracy, r2, tau = self._generation_diagnostics(
            batch, chosen_j, evaluated, values, surrogate_scores)
        stats = GenerationStats(
            generation=self.generation,
            nfe=self.objective.nfe,
            pop_size=self.population.size,
            best_value=self.best_value,
            hypervolume=hyper_volume(self.population.positions),
            n_success=int(improved.sum()),
            n_trials_per_parent=n_s,
            n_evaluated=evaluated,
            screening_accuracy=accuracy,
            surrogate_r2=r2,
            rank_correlation=tau,
            sample_archive_size=self._sample_archive_size(),
        )
        self.trace.append(stats)
        return stats

    def run(self) -> None:
        """Initialise (if needed) and iterate until the budget is spent."""
        if self.population is None:
            self.initialize()
        while self.objective.remaining() > 0:
            self.step()

    # internals -------------------------------------------------------------

    def _track_best(self) -> None:
        i = int(np.argmin(self.population.fitness))
        if self.population.fitness[i] < self.best_value:
            self.best_value = float(self.population.fitness[i])
            self.best_position = self.population.positions[i].copy()

    def _apply_lpsr(self) -> None:
        target = lpsr_next_size(self.params, self.objective.nfe)
        if target < self.population.size:
            self.population = shrink_population(
                self.population, target, self.archive,
                self.params.archive_rate, self.rng,
            )
