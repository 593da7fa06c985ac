"""Bound-constrained test functions with seeded bias/shift/rotation transforms.

A ten-function suite in four categories (unimodal, basic multimodal, hybrid,
composition) on the common search box [-100, 100]^D.  Every base function has
its global minimum of exactly 0.0 at the origin, so applying a shift S moves
the optimum to S and adding a bias B moves the optimum value to B, with both
known in closed form.  All function values are guaranteed non-negative in
floating point, which keeps recorded errors f(x) - f(x*) non-negative.

Shifts, rotations, hybrid coordinate permutations, and composition component
centres are generated from seeds, so a suite is fully reproducible from
(dimension, seed).
"""

from __future__ import annotations

import math

import numpy as np

from ._util import round_half_away

__all__ = [
    "ConfigurationError",
    "SearchBounds",
    "TransformationSpec",
    "ObjectiveFunction",
    "COMBOS",
    "BIAS_VALUE",
    "make_suite",
    "make_transformation",
    "apply_transformation",
    "random_rotation",
    "suite_manifest",
]

COMBOS = ("none", "S", "B+S", "S+R", "B+S+R")

# Fixed additive offset used whenever a combo includes the bias component.
BIAS_VALUE = 100.0

# Shift vectors are kept interior to the box so optima never sit on a bound.
_SHIFT_RANGE = 80.0

_ORTHO_TOL = 1e-10


class ConfigurationError(ValueError):
    """Invalid suite, transformation, or experiment configuration."""


# ---------------------------------------------------------------------------
# base function cores
#
# Each core maps an already-scaled matrix of row vectors z to one value per
# row, is >= 0 everywhere (also in floating point), and is exactly 0 at z = 0.
# Empty blocks (possible in hybrid partitions of very small dimensions)
# contribute 0.

def _bent_cigar(z):
    if z.shape[1] == 0:
        return np.zeros(len(z))
    return z[:, 0] ** 2 + 1e6 * np.sum(z[:, 1:] ** 2, axis=1)


def _elliptic(z):
    b = z.shape[1]
    if b == 0:
        return np.zeros(len(z))
    if b == 1:
        return z[:, 0] ** 2
    weights = np.power(1e6, np.arange(b) / (b - 1))
    return np.sum(weights * z**2, axis=1)


def _discus(z):
    if z.shape[1] == 0:
        return np.zeros(len(z))
    return 1e6 * z[:, 0] ** 2 + np.sum(z[:, 1:] ** 2, axis=1)


def _rosenbrock(z):
    b = z.shape[1]
    if b == 0:
        return np.zeros(len(z))
    w = z + 1.0
    if b == 1:
        return (w[:, 0] - 1.0) ** 2
    return np.sum(
        100.0 * (w[:, :-1] ** 2 - w[:, 1:]) ** 2 + (w[:, :-1] - 1.0) ** 2, axis=1
    )


def _ackley(z):
    b = z.shape[1]
    if b == 0:
        return np.zeros(len(z))
    rms = np.sqrt(np.sum(z**2, axis=1) / b)
    mean_cos = np.sum(np.cos(2.0 * np.pi * z), axis=1) / b
    # -20*expm1(.) and (e - exp(.)) are each >= 0 in floating point
    return -20.0 * np.expm1(-0.2 * rms) + (math.e - np.exp(mean_cos))


def _griewank(z):
    b = z.shape[1]
    if b == 0:
        return np.zeros(len(z))
    s = np.sum(z**2, axis=1) / 4000.0
    p = np.prod(np.cos(z / np.sqrt(np.arange(1.0, b + 1.0))), axis=1)
    return s + (1.0 - p)


def _rastrigin(z):
    if z.shape[1] == 0:
        return np.zeros(len(z))
    return np.sum(z**2 + 10.0 * (1.0 - np.cos(2.0 * np.pi * z)), axis=1)


_SCHWEFEL_X0 = 420.9687462275036
_SCHWEFEL_PEAK = _SCHWEFEL_X0 * math.sin(math.sqrt(_SCHWEFEL_X0))


def _schwefel(z):
    b = z.shape[1]
    if b == 0:
        return np.zeros(len(z))
    y = z + _SCHWEFEL_X0
    ay = np.abs(y)
    inside = ay <= 500.0
    t = np.where(inside, y * np.sin(np.sqrt(ay)), 0.0)
    pen = np.zeros_like(y)
    hi = y > 500.0
    if hi.any():
        w = 500.0 - np.mod(y[hi], 500.0)
        t[hi] = w * np.sin(np.sqrt(w))
        pen[hi] = (y[hi] - 500.0) ** 2 / (10000.0 * b)
    lo = y < -500.0
    if lo.any():
        m = np.mod(np.abs(y[lo]), 500.0)
        t[lo] = (m - 500.0) * np.sin(np.sqrt(500.0 - m))
        pen[lo] = (y[lo] + 500.0) ** 2 / (10000.0 * b)
    # the peak term cancels exactly at z=0; the clamp guards the few-ulp dips
    # rounding can produce immediately next to the peak
    return np.sum(np.maximum(_SCHWEFEL_PEAK - t, 0.0) + pen, axis=1)


# name -> (core, input scale); the scale maps the [-100, 100] box onto the
# range each core formula is conventionally defined on.
CORES = {
    "bent_cigar": (_bent_cigar, 1.0),
    "elliptic": (_elliptic, 1.0),
    "discus": (_discus, 1.0),
    "rosenbrock": (_rosenbrock, 2.048 / 100.0),
    "ackley": (_ackley, 1.0),
    "griewank": (_griewank, 600.0 / 100.0),
    "rastrigin": (_rastrigin, 5.12 / 100.0),
    "schwefel": (_schwefel, 1000.0 / 100.0),
}

_HYBRID_RATIOS = (0.3, 0.3, 0.4)
_COMPOSITION_SIGMAS = (10.0, 20.0, 30.0)
_COMPOSITION_BIASES = (0.0, 100.0, 200.0)

# (id, category, payload); the payload is a core name, a hybrid core triple,
# or the (core, lambda) triples of a composition.
_SUITE_LAYOUT = (
    ("F1", "unimodal", "bent_cigar"),
    ("F2", "basic", "schwefel"),
    ("F3", "basic", "rastrigin"),
    ("F4", "basic", "rosenbrock"),
    ("F5", "hybrid", ("schwefel", "rastrigin", "elliptic")),
    ("F6", "hybrid", ("griewank", "ackley", "rosenbrock")),
    ("F7", "hybrid", ("rastrigin", "discus", "bent_cigar")),
    ("F8", "composition", (("rastrigin", 1.0), ("griewank", 10.0), ("schwefel", 1.0))),
    ("F9", "composition", (("ackley", 10.0), ("elliptic", 1e-6), ("griewank", 10.0))),
    ("F10", "composition", (("rosenbrock", 1.0), ("schwefel", 1.0), ("elliptic", 1e-6))),
)

FUNCTION_IDS = tuple(entry[0] for entry in _SUITE_LAYOUT)


def hybrid_block_sizes(dimension: int) -> tuple[int, int, int]:
    """Partition sizes for hybrid functions: 0.3/0.3/0.4, remainder to last."""
    n1 = round_half_away(_HYBRID_RATIOS[0] * dimension)
    n2 = round_half_away(_HYBRID_RATIOS[1] * dimension)
    return n1, n2, dimension - n1 - n2


class SearchBounds:
    """Per-dimension box constraints."""

    def __init__(self, lower, upper):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ConfigurationError("bounds must be matching 1-d vectors")
        if not np.all(lower < upper):
            raise ConfigurationError("every lower bound must be below its upper bound")
        self.lower = lower
        self.upper = upper

    @property
    def dimension(self) -> int:
        return self.lower.size

    @classmethod
    def default(cls, dimension: int) -> "SearchBounds":
        return cls(np.full(dimension, -100.0), np.full(dimension, 100.0))


class TransformationSpec:
    """Bias/shift/rotation triple applied as f(x) = f_base(R (x - S)) + B."""

    def __init__(self, bias, shift, rotation, combo):
        shift = np.asarray(shift, dtype=float)
        rotation = np.asarray(rotation, dtype=float)
        d = shift.size
        if rotation.shape != (d, d):
            raise ConfigurationError("rotation shape does not match shift dimension")
        err = np.max(np.abs(rotation.T @ rotation - np.eye(d)))
        if err > _ORTHO_TOL:
            raise ConfigurationError(f"rotation is not orthogonal (deviation {err:.2e})")
        if combo not in COMBOS:
            raise ConfigurationError(f"unknown transformation combo {combo!r}")
        if combo == "none" and (
            bias != 0.0 or shift.any() or not np.array_equal(rotation, np.eye(d))
        ):
            raise ConfigurationError("combo 'none' requires identity components")
        self.bias = float(bias)
        self.shift = shift
        self.rotation = rotation
        self.combo = combo

    @property
    def dimension(self) -> int:
        return self.shift.size


class ObjectiveFunction:
    """A minimisation target with a known optimum.

    ``evaluate`` accepts a single D-vector or an (M, D) batch of row vectors
    and is pure: equal inputs give bit-identical outputs.  Instances are
    immutable after construction and safe for concurrent read-only use.
    """

    def __init__(self, id, category, dimension, optimum_point, optimum_value,
                 bounds=None, combo="none", seed=None):
        self.id = id
        self.category = category
        self.dimension = int(dimension)
        self.optimum_point = np.asarray(optimum_point, dtype=float)
        self.optimum_value = float(optimum_value)
        self.bounds = bounds if bounds is not None else SearchBounds.default(dimension)
        self.combo = combo
        self.seed = seed

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        rows = np.atleast_2d(x)
        if rows.shape[1] != self.dimension:
            raise ConfigurationError(
                f"{self.id}: expected dimension {self.dimension}, got {rows.shape[1]}"
            )
        values = self._evaluate_rows(rows)
        return float(values[0]) if single else values

    __call__ = evaluate

    def _evaluate_rows(self, rows):
        raise NotImplementedError

    def manifest_row(self) -> str:
        return ",".join(
            [self.id, self.category, str(self.seed), self.combo,
             repr(self.optimum_value)]
        )


class SimpleFunction(ObjectiveFunction):
    """Single-core function, optimum 0 at the origin."""

    def __init__(self, id, category, dimension, core, seed=None):
        super().__init__(id, category, dimension, np.zeros(dimension), 0.0, seed=seed)
        self.core = core

    def _evaluate_rows(self, rows):
        fn, scale = CORES[self.core]
        return fn(scale * rows)


class HybridFunction(ObjectiveFunction):
    """Sum of cores over disjoint blocks of permuted coordinates."""

    def __init__(self, id, dimension, cores, rng, seed=None):
        super().__init__(id, "hybrid", dimension, np.zeros(dimension), 0.0, seed=seed)
        self.permutation = rng.permutation(dimension)
        self.blocks = tuple(zip(cores, hybrid_block_sizes(dimension)))

    def _evaluate_rows(self, rows):
        z = rows[:, self.permutation]
        total = np.zeros(len(rows))
        start = 0
        for core, size in self.blocks:
            fn, scale = CORES[core]
            total = total + fn(scale * z[:, start:start + size])
            start += size
        return total


class CompositionFunction(ObjectiveFunction):
    """Proximity-weighted mixture of shifted cores.

    The first component is centred at the origin with zero inner bias, which
    pins the global optimum of the mixture to the origin with value 0: the
    mixture is a convex combination of non-negative component values.
    """

    def __init__(self, id, dimension, parts, rng, seed=None):
        super().__init__(id, "composition", dimension,
                         np.zeros(dimension), 0.0, seed=seed)
        components = []
        for j, ((core, lam), sigma, bias) in enumerate(
            zip(parts, _COMPOSITION_SIGMAS, _COMPOSITION_BIASES)
        ):
            if j == 0:
                centre = np.zeros(dimension)
            else:
                centre = rng.uniform(-_SHIFT_RANGE, _SHIFT_RANGE, dimension)
            components.append((core, centre, sigma, lam, bias))
        self.components = tuple(components)

    def _evaluate_rows(self, rows):
        n = len(rows)
        k = len(self.components)
        weights = np.empty((n, k))
        values = np.empty((n, k))
        exact = np.full(n, -1)
        for j, (core, centre, sigma, lam, bias) in enumerate(self.components):
            diff = rows - centre
            d2 = np.sum(diff**2, axis=1)
            fn, scale = CORES[core]
            values[:, j] = lam * fn(scale * diff) + bias
            hit = d2 == 0.0
            exact[hit] = j
            with np.errstate(divide="ignore"):
                weights[:, j] = np.where(
                    hit, np.inf,
                    np.exp(-d2 / (2.0 * self.dimension * sigma**2)) / np.sqrt(d2),
                )
        out = np.empty(n)
        on_centre = exact >= 0
        if on_centre.any():
            out[on_centre] = values[on_centre, exact[on_centre]]
        rest = ~on_centre
        if rest.any():
            w = weights[rest]
            wsum = np.sum(w, axis=1)
            # far from every centre the gaussian weights can underflow to 0;
            # fall back to the nearest centre, which dominates before underflow
            flat = wsum == 0.0
            if flat.any():
                sub = np.zeros_like(w[flat])
                sub[np.arange(int(flat.sum())), np.argmax(w[flat], axis=1)] = 1.0
                w[flat] = sub
                wsum[flat] = 1.0
            out[rest] = np.sum(w * values[rest], axis=1) / wsum
        return out


class TransformedFunction(ObjectiveFunction):
    """Base function composed with a bias/shift/rotation transformation."""

    def __init__(self, base: ObjectiveFunction, spec: TransformationSpec):
        if spec.dimension != base.dimension:
            raise ConfigurationError(
                f"transformation dimension {spec.dimension} does not match "
                f"{base.id} dimension {base.dimension}"
            )
        super().__init__(
            base.id, base.category, base.dimension,
            optimum_point=spec.shift.copy(),
            optimum_value=base.optimum_value + spec.bias,
            bounds=base.bounds, combo=spec.combo, seed=base.seed,
        )
        self.base = base
        self.transformation = spec

    def _evaluate_rows(self, rows):
        spec = self.transformation
        inner = (rows - spec.shift) @ spec.rotation.T
        return self.base._evaluate_rows(inner) + spec.bias


# ---------------------------------------------------------------------------
# constructors

def random_rotation(dimension: int, seed) -> np.ndarray:
    """Seeded random rotation: orthonormalised gaussian matrix, det +1.

    The triangular factor's diagonal is sign-fixed to be positive; if the
    resulting determinant is -1 the last column is negated.
    """
    if dimension < 1:
        raise ConfigurationError("rotation dimension must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dimension, dimension))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q


def make_transformation(combo: str, dimension: int, seed) -> TransformationSpec:
    """Build a seeded transformation instance for one combo.

    The shift (when present) is uniform in [-80, 80]^D; the bias (when
    present) is the fixed constant ``BIAS_VALUE``.
    """
    if combo not in COMBOS:
        raise ConfigurationError(f"unknown transformation combo {combo!r}")
    rng = np.random.default_rng(seed)
    shift = np.zeros(dimension)
    rotation = np.eye(dimension)
    bias = 0.0
    if "S" in combo:
        shift = rng.uniform(-_SHIFT_RANGE, _SHIFT_RANGE, dimension)
    if "R" in combo:
        rotation = random_rotation(dimension, rng.integers(2**63))
    if "B" in combo:
        bias = BIAS_VALUE
    return TransformationSpec(bias, shift, rotation, combo)


def apply_transformation(f: ObjectiveFunction, t: TransformationSpec) -> ObjectiveFunction:
    """Compose a base function with a transformation; combo 'none' is the identity."""
    if t.combo == "none":
        return f
    return TransformedFunction(f, t)


def make_suite(dimension: int, seed) -> list[ObjectiveFunction]:
    """Build the ten-function suite for one dimension.

    Function families per category are fixed; only hybrid permutations and
    composition centres depend on the seed.  Equal (dimension, seed) pairs
    produce bit-identical suites.
    """
    if not 2 <= dimension <= 100:
        raise ConfigurationError("suite dimension must be in 2..100")
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(_SUITE_LAYOUT))
    suite = []
    for (fid, category, payload), child in zip(_SUITE_LAYOUT, children):
        rng = np.random.default_rng(child)
        if category in ("unimodal", "basic"):
            suite.append(SimpleFunction(fid, category, dimension, payload, seed=seed))
        elif category == "hybrid":
            suite.append(HybridFunction(fid, dimension, payload, rng, seed=seed))
        else:
            suite.append(CompositionFunction(fid, dimension, payload, rng, seed=seed))
    return suite


def suite_manifest(functions) -> str:
    """One audit line per function: id, category, seed, combo, optimum value."""
    return "\n".join(f.manifest_row() for f in functions)
