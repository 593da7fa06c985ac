"""Scoring pipeline and surrogate diagnostics.

Implements the competition-style aggregation used to compare algorithms
(normalized errors, rank sums, and the two 50-point partial scores) plus the
per-generation diagnostic statistics: population hyper-volume, screening
selection accuracy, coefficient of determination, and Kendall's tau-b.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import kendalltau, rankdata

__all__ = [
    "RunRecord",
    "ScoreRow",
    "Scoreboard",
    "DiagnosticTrace",
    "normalized_error",
    "score_pipeline",
    "hyper_volume",
    "selection_accuracy",
    "kendall_tau",
    "r_squared",
    "checkpoint_nfe",
]

N_CHECKPOINTS = 16


@dataclass
class RunRecord:
    """Convergence record of a single optimisation run.

    ``checkpoints`` holds 16 (nfe, error) pairs with non-increasing errors;
    ``final_error`` equals the error at the last checkpoint (the full budget).
    """

    algorithm: str
    function_id: str
    combo: str
    dimension: int
    repetition: int
    checkpoints: list[tuple[int, float]]
    final_error: float


@dataclass
class ScoreRow:
    sne: float
    sr: float
    score1: float
    score2: float

    @property
    def score(self) -> float:
        return self.score1 + self.score2


@dataclass
class Scoreboard:
    """Per-algorithm aggregate scores; higher total is better, maximum 100."""

    rows: dict[str, ScoreRow]

    def best(self) -> str:
        return max(self.rows, key=lambda a: self.rows[a].score)


@dataclass
class DiagnosticTrace:
    """Per-generation diagnostics of one run.

    Columns: generation, nfe, accuracy, r2, tau, hypervolume, archive_size.
    Missing statistics (no screening, undefined correlation) are NaN.
    """

    algorithm: str
    function_id: str
    combo: str
    dimension: int
    repetition: int
    rows: list[tuple]


def checkpoint_nfe(max_nfe: int, dimension: int) -> list[int]:
    """The 16 recording thresholds ceil(max_nfe * D^(k/5 - 3)), clamped to [1, max_nfe]."""
    out = []
    for k in range(N_CHECKPOINTS):
        t = math.ceil(max_nfe * dimension ** (k / 5.0 - 3.0))
        out.append(min(max(t, 1), max_nfe))
    return out


def normalized_error(best: float, optimum: float, worst_best: float) -> float:
    """(best - optimum) / (worst_best - optimum), defined as 0 when the numerator is 0."""
    if best < optimum:
        raise ValueError("best value lies below the optimum")
    if worst_best < best:
        raise ValueError("worst best value lies below this algorithm's best")
    numerator = best - optimum
    if numerator == 0.0:
        return 0.0
    return numerator / (worst_best - optimum)


def _group_final_errors(records, algorithms):
    cells: dict[tuple, dict[str, list[float]]] = {}
    for rec in records:
        if algorithms is not None and rec.algorithm not in algorithms:
            continue
        key = (rec.function_id, rec.combo, rec.dimension)
        cells.setdefault(key, {}).setdefault(rec.algorithm, []).append(rec.final_error)
    return cells


def score_pipeline(records, algorithms=None) -> Scoreboard:
    """Aggregate run records into the two-part score.

    Every algorithm must cover every (function, combo, dimension) cell with
    the same repetition count; ragged inputs raise ValueError.  Per cell the
    best-of-repetitions error feeds the normalized-error sum and the
    mean-of-repetitions error feeds the rank sum; each dimension group is
    weighted 0.5.
    """
    cells = _group_final_errors(records, set(algorithms) if algorithms else None)
    if not cells:
        raise ValueError("no run records to score")
    if algorithms is None:
        algorithms = sorted({a for per_alg in cells.values() for a in per_alg})
    algorithms = list(algorithms)

    for key, per_alg in cells.items():
        if set(per_alg) != set(algorithms):
            raise ValueError(f"cell {key} is missing algorithms")
        counts = {len(errs) for errs in per_alg.values()}
        if len(counts) != 1:
            raise ValueError(f"cell {key} has ragged repetition counts")

    sne = {a: 0.0 for a in algorithms}
    sr = {a: 0.0 for a in algorithms}
    for (fid, combo, dim), per_alg in cells.items():
        best = {a: min(per_alg[a]) for a in algorithms}
        mean = [float(np.mean(per_alg[a])) for a in algorithms]
        worst_best = max(best.values())
        ranks = rankdata(mean, method="average")
        for a, rank in zip(algorithms, ranks):
            sne[a] += 0.5 * normalized_error(best[a], 0.0, worst_best)
            sr[a] += 0.5 * float(rank)

    sne_min = min(sne.values())
    sr_min = min(sr.values())
    rows = {}
    for a in algorithms:
        rows[a] = ScoreRow(
            sne=sne[a],
            sr=sr[a],
            score1=_partial_score(sne[a], sne_min),
            score2=_partial_score(sr[a], sr_min),
        )
    return Scoreboard(rows)


def _partial_score(value: float, minimum: float) -> float:
    if value == minimum:
        # covers the degenerate all-solved case where both are 0
        return 50.0
    return (1.0 - (value - minimum) / value) * 50.0


def hyper_volume(points) -> float:
    """Product of per-dimension ranges of a set of points (dispersion proxy)."""
    pts = getattr(points, "positions", points)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("hyper_volume expects a non-empty (N, D) array")
    return float(np.prod(pts.max(axis=0) - pts.min(axis=0)))


def selection_accuracy(true_values, chosen_index: int) -> bool:
    """Whether the chosen trial attains the minimum true fitness (ties count)."""
    values = np.asarray(true_values, dtype=float)
    return bool(values[chosen_index] == values.min())


def kendall_tau(a, b) -> Optional[float]:
    """Tie-corrected Kendall tau-b in [-1, 1]; None when undefined."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size != b.size:
        raise ValueError("sequences must have equal length")
    if a.size < 2:
        return None
    tau = kendalltau(a, b, variant="b").statistic
    if math.isnan(tau):
        return None
    return float(tau)


def r_squared(fitted, observed) -> Optional[float]:
    """1 - SS_res/SS_tot, clamped to [0, 1]; None for degenerate observations."""
    fitted = np.asarray(fitted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if observed.size < 2:
        return None
    ss_tot = float(np.sum((observed - observed.mean()) ** 2))
    if ss_tot == 0.0:
        return None
    ss_res = float(np.sum((observed - fitted) ** 2))
    return float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))
