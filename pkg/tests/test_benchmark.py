import math

import numpy as np
import pytest

from pslshade.benchmark import (
    BIAS_VALUE,
    COMBOS,
    ConfigurationError,
    SearchBounds,
    TransformationSpec,
    apply_transformation,
    hybrid_block_sizes,
    make_suite,
    make_transformation,
    random_rotation,
    suite_manifest,
)

# ---------------------------------------------------------------------------
# independent scalar re-implementations of the core formulas, used as oracles

SCHWEFEL_X0 = 420.9687462275036
SCHWEFEL_PEAK = SCHWEFEL_X0 * math.sin(math.sqrt(SCHWEFEL_X0))


def oracle_core(name, z):
    z = list(z)
    n = len(z)
    if n == 0:
        return 0.0
    if name == "bent_cigar":
        return z[0] ** 2 + 1e6 * sum(v**2 for v in z[1:])
    if name == "elliptic":
        if n == 1:
            return z[0] ** 2
        return sum(1e6 ** (i / (n - 1)) * z[i] ** 2 for i in range(n))
    if name == "discus":
        return 1e6 * z[0] ** 2 + sum(v**2 for v in z[1:])
    if name == "rosenbrock":
        w = [v + 1.0 for v in z]
        if n == 1:
            return (w[0] - 1.0) ** 2
        return sum(100.0 * (w[i] ** 2 - w[i + 1]) ** 2 + (w[i] - 1.0) ** 2
                   for i in range(n - 1))
    if name == "ackley":
        rms = math.sqrt(sum(v**2 for v in z) / n)
        mc = sum(math.cos(2 * math.pi * v) for v in z) / n
        return -20.0 * math.expm1(-0.2 * rms) + (math.e - math.exp(mc))
    if name == "griewank":
        s = sum(v**2 for v in z) / 4000.0
        p = 1.0
        for i, v in enumerate(z):
            p *= math.cos(v / math.sqrt(i + 1.0))
        return s + (1.0 - p)
    if name == "rastrigin":
        return sum(v**2 + 10.0 * (1.0 - math.cos(2 * math.pi * v)) for v in z)
    if name == "schwefel":
        total = 0.0
        for v in z:
            y = v + SCHWEFEL_X0
            pen = 0.0
            if abs(y) <= 500.0:
                t = y * math.sin(math.sqrt(abs(y)))
            elif y > 500.0:
                w = 500.0 - math.fmod(y, 500.0)
                t = w * math.sin(math.sqrt(w))
                pen = (y - 500.0) ** 2 / (10000.0 * n)
            else:
                m = math.fmod(abs(y), 500.0)
                t = (m - 500.0) * math.sin(math.sqrt(500.0 - m))
                pen = (y + 500.0) ** 2 / (10000.0 * n)
            total += max(SCHWEFEL_PEAK - t, 0.0) + pen
        return total
    raise KeyError(name)


ORACLE_SCALES = {
    "bent_cigar": 1.0, "elliptic": 1.0, "discus": 1.0,
    "rosenbrock": 2.048 / 100.0, "ackley": 1.0, "griewank": 6.0,
    "rastrigin": 0.0512, "schwefel": 10.0,
}


def test_suite_composition():
    suite = make_suite(10, 3)
    assert [f.id for f in suite] == [f"F{i}" for i in range(1, 11)]
    cats = [f.category for f in suite]
    assert cats.count("unimodal") == 1
    assert cats.count("basic") == 3
    assert cats.count("hybrid") == 3
    assert cats.count("composition") == 3


@pytest.mark.parametrize("dim,seed", [(2, 0), (2, 99), (10, 7), (20, 1)])
def test_optimum_consistency_base(dim, seed):
    for f in make_suite(dim, seed):
        assert abs(f.evaluate(f.optimum_point) - f.optimum_value) < 1e-9


def test_optimum_consistency_all_combos():
    for f in make_suite(10, 5):
        for k, combo in enumerate(COMBOS):
            t = make_transformation(combo, 10, seed=1000 + k)
            g = apply_transformation(f, t)
            assert abs(g.evaluate(g.optimum_point) - g.optimum_value) < 1e-9


def test_rotation_leaves_optimum_value_unchanged():
    rng = np.random.default_rng(0)
    for f in make_suite(10, 5):
        shift = rng.uniform(-80, 80, 10)
        plain = TransformationSpec(0.0, shift, np.eye(10), "S")
        rotated = TransformationSpec(0.0, shift, random_rotation(10, 4), "S+R")
        assert (apply_transformation(f, plain).optimum_value
                == apply_transformation(f, rotated).optimum_value)


def test_bent_cigar_zero_at_origin():
    f = make_suite(20, 1)[0]
    assert f.evaluate(np.zeros(20)) == 0.0


def test_hybrid_block_sizes():
    assert hybrid_block_sizes(10) == (3, 3, 4)
    assert hybrid_block_sizes(20) == (6, 6, 8)
    assert sum(hybrid_block_sizes(2)) == 2
    assert sum(hybrid_block_sizes(7)) == 7


def test_hybrid_matches_independent_reimplementation():
    suite = make_suite(10, 7)
    rng = np.random.default_rng(11)
    probes = rng.uniform(-100, 100, (5, 10))
    for f in suite:
        if f.category != "hybrid":
            continue
        for x in probes:
            z = [x[p] for p in f.permutation]
            expected = 0.0
            start = 0
            for core, size in f.blocks:
                block = [ORACLE_SCALES[core] * v for v in z[start:start + size]]
                expected += oracle_core(core, block)
                start += size
            assert f.evaluate(x) == pytest.approx(expected, rel=1e-9)


def test_composition_matches_independent_reimplementation():
    suite = make_suite(10, 7)
    rng = np.random.default_rng(12)
    probes = rng.uniform(-100, 100, (5, 10))
    for f in suite:
        if f.category != "composition":
            continue
        for x in probes:
            weights, values = [], []
            for core, centre, sigma, lam, bias in f.components:
                diff = [xi - ci for xi, ci in zip(x, centre)]
                d2 = sum(v**2 for v in diff)
                scaled = [ORACLE_SCALES[core] * v for v in diff]
                values.append(lam * oracle_core(core, scaled) + bias)
                weights.append(
                    math.exp(-d2 / (2 * 10 * sigma**2)) / math.sqrt(d2)
                    if d2 > 0 else math.inf)
            total = sum(weights)
            expected = sum(w / total * v for w, v in zip(weights, values))
            assert f.evaluate(x) == pytest.approx(expected, rel=1e-9)


def test_transformation_none_is_identity():
    f = make_suite(10, 2)[4]
    t = make_transformation("none", 10, seed=5)
    g = apply_transformation(f, t)
    probes = np.random.default_rng(1).uniform(-100, 100, (100, 10))
    assert np.array_equal(g.evaluate(probes), f.evaluate(probes))


def test_transformation_bias_shift():
    for f in make_suite(10, 3):
        t = make_transformation("B+S", 10, seed=77)
        g = apply_transformation(f, t)
        assert g.evaluate(t.shift) == pytest.approx(f.optimum_value + BIAS_VALUE,
                                                    abs=1e-9)
        assert np.array_equal(g.optimum_point, t.shift)


def test_transformation_shift_rotation_matches_hand_composition():
    f = make_suite(10, 3)[1]
    t = make_transformation("S+R", 10, seed=13)
    g = apply_transformation(f, t)
    rng = np.random.default_rng(2)
    for x in rng.uniform(-100, 100, (20, 10)):
        inner = t.rotation @ (x - t.shift)
        assert g.evaluate(x) == pytest.approx(f.evaluate(inner), rel=1e-12)


def test_transformation_dimension_mismatch():
    f = make_suite(10, 3)[0]
    t = make_transformation("S", 5, seed=0)
    with pytest.raises(ConfigurationError):
        apply_transformation(f, t)


def test_random_rotation_properties():
    assert np.array_equal(random_rotation(1, 123), [[1.0]])
    r = random_rotation(5, 3)
    assert np.max(np.abs(r.T @ r - np.eye(5))) < 1e-10
    for d in range(1, 9):
        assert np.linalg.det(random_rotation(d, d * 17 + 1)) == pytest.approx(1.0,
                                                                              abs=1e-9)
    assert np.array_equal(random_rotation(20, 3), random_rotation(20, 3))


def test_transformation_spec_validation():
    with pytest.raises(ConfigurationError):
        TransformationSpec(0.0, np.zeros(3), np.ones((3, 3)), "S+R")
    with pytest.raises(ConfigurationError):
        TransformationSpec(5.0, np.zeros(3), np.eye(3), "none")
    with pytest.raises(ConfigurationError):
        TransformationSpec(0.0, np.zeros(3), np.eye(3), "weird")


def test_all_values_finite_and_above_optimum():
    rng = np.random.default_rng(9)
    probes = rng.uniform(-100, 100, (50, 10))
    for f in make_suite(10, 21):
        for k, combo in enumerate(COMBOS):
            g = apply_transformation(f, make_transformation(combo, 10, seed=k))
            vals = g.evaluate(probes)
            assert np.all(np.isfinite(vals))
            assert np.all(vals >= g.optimum_value)


def test_suite_determinism():
    a = make_suite(10, 42)
    b = make_suite(10, 42)
    assert suite_manifest(a) == suite_manifest(b)
    probes = np.random.default_rng(3).uniform(-100, 100, (10, 10))
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.evaluate(probes), fb.evaluate(probes))
    c = make_suite(10, 43)
    diffs = sum(
        not np.array_equal(fa.evaluate(probes), fc.evaluate(probes))
        for fa, fc in zip(a, c))
    assert diffs > 0


def test_suite_dimension_validation():
    with pytest.raises(ConfigurationError):
        make_suite(1, 0)
    with pytest.raises(ConfigurationError):
        make_suite(101, 0)


def test_bounds():
    b = SearchBounds.default(7)
    assert np.all(b.lower == -100.0) and np.all(b.upper == 100.0)
    assert b.dimension == 7
    with pytest.raises(ConfigurationError):
        SearchBounds([0.0, 0.0], [1.0, 0.0])


def test_manifest_has_ten_lines():
    lines = suite_manifest(make_suite(10, 1)).splitlines()
    assert len(lines) == 10
    assert lines[0].startswith("F1,unimodal,1,none,")
