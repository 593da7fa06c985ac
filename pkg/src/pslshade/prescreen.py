"""Pre-screening extension: LHS init, sample archive, linear meta-model.

The screening engine generates several trial vectors per parent, ranks them
with a global linear surrogate of the fitness function, and spends a true
evaluation only on the surrogate-best trial.  The surrogate is an ordinary
least squares fit over six variable transformations (constant, linear,
quadratic, pairwise interactions, inverse linear, inverse quadratic) trained
on a bounded archive of the best evaluated samples.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .benchmark import ConfigurationError, SearchBounds
from .de_core import LshadeEngine, TrialBatch, generate_trial_batch
from .metrics import kendall_tau

__all__ = [
    "df_mm",
    "feature_map",
    "feature_matrix",
    "lhs_init",
    "SampleArchive",
    "MetaModel",
    "ScreeningConfig",
    "screen",
    "generate_trial_batch",
    "PslshadeEngine",
]

# similarity tolerance of the sample archive's anti-duplicate rule
_SIMILARITY_TOL = 1e-12

# coordinates closer to zero than this are nudged before inversion
_INVERSE_GUARD = 1e-12

# relative pivot threshold below which a column is dropped from the fit
_PIVOT_TOL = 1e-10


def df_mm(dimension: int) -> int:
    """Degrees of freedom of the full feature map: (D^2 + 7D)/2 + 1."""
    return (dimension * dimension + 7 * dimension) // 2 + 1


@lru_cache(maxsize=64)
def _pair_indices(dimension: int):
    return np.triu_indices(dimension, k=1)


def feature_matrix(points) -> np.ndarray:
    """Feature rows [1 | x | x^2 | x_i x_j (i<j) | 1/x | 1/x^2].

    Coordinates with magnitude below 1e-12 are replaced by +/-1e-12 (the sign
    of zero taken as +) so the inverse features stay finite.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    m, d = x.shape
    guarded = np.where(
        np.abs(x) < _INVERSE_GUARD,
        np.where(x < 0.0, -_INVERSE_GUARD, _INVERSE_GUARD),
        x,
    )
    iu, ju = _pair_indices(d)
    out = np.empty((m, df_mm(d)))
    out[:, 0] = 1.0
    out[:, 1:1 + d] = guarded
    out[:, 1 + d:1 + 2 * d] = guarded**2
    out[:, 1 + 2 * d:1 + 2 * d + iu.size] = guarded[:, iu] * guarded[:, ju]
    inv = 1.0 / guarded
    base = 1 + 2 * d + iu.size
    out[:, base:base + d] = inv
    out[:, base + d:] = inv**2
    return out


def feature_map(x) -> np.ndarray:
    """Feature vector of a single point."""
    return feature_matrix(np.asarray(x, dtype=float)[None, :])[0]


def lhs_init(n: int, bounds: SearchBounds, rng) -> np.ndarray:
    """Latin hypercube sample: one point per stratum in every dimension.

    Each dimension is cut into n equal strata; an independent random
    permutation assigns strata to points and each coordinate is uniform
    within its stratum.
    """
    if n < 1:
        raise ConfigurationError("sample count must be >= 1")
    d = bounds.dimension
    width = (bounds.upper - bounds.lower) / n
    out = np.empty((n, d))
    for j in range(d):
        strata = rng.permutation(n)
        out[:, j] = bounds.lower[j] + (strata + rng.random(n)) * width[j]
    return out


class SampleArchive:
    """Capacity-bounded store of the best (point, fitness) pairs seen so far.

    Inserts are rejected when a similar pair already exists: positions equal
    within 1e-12 in every coordinate, or fitness values equal within 1e-12.
    Once full, a new pair replaces the worst entry only if it is better.
    """

    def __init__(self, capacity: int, dimension: int, row_transform=None):
        self.capacity = capacity
        self.dimension = dimension
        self._positions = np.empty((capacity, dimension))
        self._fitness = np.empty(capacity)
        self.size = 0
        self.version = 0
        self._worst = -1  # index of the worst entry, valid once full
        # optional per-entry transformed rows, kept slot-aligned (used to
        # avoid rebuilding the full design matrix on every surrogate fit)
        self._row_transform = row_transform
        self._rows = None

    def __len__(self) -> int:
        return self.size

    @property
    def positions(self) -> np.ndarray:
        return self._positions[: self.size]

    @property
    def fitness(self) -> np.ndarray:
        return self._fitness[: self.size]

    @property
    def transformed_rows(self) -> np.ndarray:
        return self._rows[: self.size]

    def _is_similar(self, point, fitness) -> bool:
        if self.size == 0:
            return False
        if np.any(np.abs(self.fitness - fitness) <= _SIMILARITY_TOL):
            return True
        # cheap single-coordinate prefilter before the full row comparison
        near = np.abs(self._positions[: self.size, 0] - point[0]) <= _SIMILARITY_TOL
        if not near.any():
            return False
        rows = self._positions[: self.size][near]
        return bool(np.any(np.all(np.abs(rows - point) <= _SIMILARITY_TOL, axis=1)))

    def _store(self, slot: int, point, fitness: float) -> None:
        self._positions[slot] = point
        self._fitness[slot] = fitness
        if self._row_transform is not None:
            if self._rows is None:
                width = self._row_transform(point[None, :]).shape[1]
                self._rows = np.empty((self.capacity, width))
            self._rows[slot] = self._row_transform(point[None, :])[0]

    def insert(self, point, fitness: float) -> bool:
        """Insert one evaluated pair; returns whether the archive changed.

        A full archive rejects anything not better than its worst entry (a
        similar pair would be rejected too, so the outcome is identical).
        """
        fitness = float(fitness)
        if self.size == self.capacity and fitness >= self._fitness[self._worst]:
            return False
        point = np.asarray(point, dtype=float)
        if self._is_similar(point, fitness):
            return False
        if self.size < self.capacity:
            self._store(self.size, point, fitness)
            self.size += 1
            if self.size == self.capacity:
                self._worst = int(np.argmax(self._fitness))
        else:
            self._store(self._worst, point, fitness)
            self._worst = int(np.argmax(self._fitness))
        self.version += 1
        return True


def _solve_ols(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Rank-revealing least squares with zero coefficients on dropped columns.

    Pivoted Cholesky of the column-scaled Gram matrix selects columns by the
    same greedy largest-remaining-norm rule as column-pivoted QR; columns
    whose scaled pivot falls below the square of the relative threshold
    (pivot magnitude below 1e-10 times the largest) get zero coefficients.
    Two iterative-refinement sweeps restore the accuracy lost by working on
    the Gram matrix.
    """
    n = x.shape[1]
    gram = x.T @ x
    rhs = x.T @ y
    scale = np.sqrt(np.diag(gram))
    scale[scale == 0.0] = 1.0
    scaled = gram / np.outer(scale, scale)
    factor, piv, rank, _info = lapack.dpstrf(scaled, tol=_PIVOT_TOL**2, lower=1)
    beta = np.zeros(n)
    if rank == 0:
        return beta
    keep = piv[:rank] - 1
    chol = factor[:rank, :rank]

    def correction(residual_rhs):
        u = solve_triangular(chol, residual_rhs[keep] / scale[keep],
                             lower=True, check_finite=False)
        v = solve_triangular(chol.T, u, lower=False, check_finite=False)
        return v / scale[keep]

    beta[keep] = correction(rhs)
    for _ in range(2):
        beta[keep] += correction(x.T @ (y - x @ beta))
    return beta


class MetaModel:
    """Global linear surrogate over the six-transformation feature map.

    The fit is plain least squares on the raw feature columns.  As the sample
    archive concentrates around an optimum the design degenerates and the fit
    loses resolution; that decay (and the resulting drift of screening toward
    random selection late in a run) is an inherent property of the raw
    global model that the selection-accuracy diagnostics make visible.
    """

    def __init__(self, dimension: int):
        self.dimension = dimension
        self.df = df_mm(dimension)
        self.coefficients = np.zeros(self.df)
        self.fitted = False
        self.last_r2: Optional[float] = None
        self.last_r2_raw: Optional[float] = None
        self._fitted_version = -1

    def fit(self, archive: SampleArchive) -> "MetaModel":
        """Refit from the archive; a no-op while it holds fewer than df samples.

        Fitting an unchanged archive again reuses the previous coefficients.
        """
        if archive.size < self.df:
            self.fitted = False
            return self
        if self.fitted and archive.version == self._fitted_version:
            return self
        if archive._rows is not None:
            x = archive.transformed_rows
        else:
            x = feature_matrix(archive.positions)
        y = archive.fitness
        self.coefficients = _solve_ols(x, y)
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        if ss_tot > 0.0:
            ss_res = float(np.sum((y - x @ self.coefficients) ** 2))
            self.last_r2_raw = 1.0 - ss_res / ss_tot
            self.last_r2 = float(np.clip(self.last_r2_raw, 0.0, 1.0))
        else:
            self.last_r2_raw = None
            self.last_r2 = None
        self.fitted = True
        self._fitted_version = archive.version
        return self

    def predict(self, points) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError("meta-model is not fitted")
        return feature_matrix(points) @ self.coefficients


def screen(trials, model: MetaModel) -> int:
    """Index of the surrogate-best trial; exact ties keep the lowest index."""
    trials = np.atleast_2d(np.asarray(trials, dtype=float))
    if len(trials) == 0:
        raise ValueError("no trials to screen")
    return int(np.argmin(model.predict(trials)))


class ScreeningConfig:
    """Trial count per parent and sample archive capacity."""

    def __init__(self, dimension: int, n_s: int = 5, n_a: Optional[int] = None):
        if n_s < 1:
            raise ConfigurationError("n_s must be >= 1")
        df = df_mm(dimension)
        self.n_s = n_s
        self.n_a = 2 * df if n_a is None else n_a
        if self.n_a < df:
            raise ConfigurationError("archive capacity must be at least df_mm")


class PslshadeEngine(LshadeEngine):
    """LSHADE with trial-vector pre-screening.

    Differences from the base engine: the initial population comes from Latin
    hypercube sampling (unless ``init='uniform'``), every evaluated point is
    offered to the sample archive, and once the archive holds df_mm samples
    the surrogate is refitted each generation and used to pick one of n_s
    trials per parent.  Below that threshold each parent generates a single
    trial, which is exactly a plain LSHADE generation.

    ``screener='random'`` replaces the surrogate argmin with a uniform random
    choice; it is a diagnostic baseline for the selection-accuracy statistic.
    With diagnostics enabled the non-chosen trials are also evaluated through
    the objective's uncounted probe channel to score each screening decision.
    """

    def __init__(self, objective, bounds, params, seed, n_s: int = 5,
                 n_a: Optional[int] = None, init: str = "lhs",
                 screener: str = "surrogate", diagnostics: bool = False):
        super().__init__(objective, bounds, params, seed, diagnostics=diagnostics)
        if init not in ("lhs", "uniform"):
            raise ConfigurationError(f"unknown init scheme {init!r}")
        if screener not in ("surrogate", "random"):
            raise ConfigurationError(f"unknown screener {screener!r}")
        self.screening = ScreeningConfig(bounds.dimension, n_s=n_s, n_a=n_a)
        self.init = init
        self.screener = screener
        self.sample_archive = SampleArchive(self.screening.n_a, bounds.dimension,
                                            row_transform=feature_matrix)
        self.model = MetaModel(bounds.dimension)

    # hook implementations --------------------------------------------------

    def _initial_positions(self, n):
        if self.init == "uniform":
            return super()._initial_positions(n)
        return lhs_init(n, self.bounds, self.rng)

    def _after_initial_evaluation(self, positions, values):
        for point, value in zip(positions, values):
            self.sample_archive.insert(point, value)

    def _prepare_generation(self):
        if self.screening.n_s == 1:
            return 1
        self.model.fit(self.sample_archive)
        return self.screening.n_s if self.model.fitted else 1

    def _choose_trials(self, batch: TrialBatch):
        n, n_s, d = batch.trials.shape
        if n_s == 1:
            return np.zeros(n, dtype=int), None
        scores = self.model.predict(batch.trials.reshape(n * n_s, d)).reshape(n, n_s)
        if self.screener == "random":
            return self.rng.integers(0, n_s, n), scores
        return np.argmin(scores, axis=1), scores

    def _after_trial_evaluation(self, points, values):
        for point, value in zip(points, values):
            self.sample_archive.insert(point, value)

    def _sample_archive_size(self):
        return self.sample_archive.size

    def _generation_diagnostics(self, batch, chosen_j, evaluated, chosen_values,
                                surrogate_scores):
        if surrogate_scores is None:
            return None, self.model.last_r2 if self.model.fitted else None, None
        idx = np.arange(evaluated)
        tau = None
        if self.diagnostics and evaluated >= 2:
            tau = kendall_tau(surrogate_scores[idx, chosen_j[:evaluated]], chosen_values)
        accuracy = None
        if self.diagnostics and evaluated > 0:
            n, n_s, d = batch.trials.shape
            others = np.asarray(self.objective.probe(
                batch.trials[:evaluated].reshape(evaluated * n_s, d)
            )).reshape(evaluated, n_s)
            # the chosen trial's probe is replaced by its counted evaluation
            others[idx, chosen_j[:evaluated]] = chosen_values
            accuracy = float(np.mean(others[idx, chosen_j[:evaluated]]
                                     == others.min(axis=1)))
        return accuracy, self.model.last_r2, tau
