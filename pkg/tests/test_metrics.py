import numpy as np
import pytest

from pslshade.metrics import (
    RunRecord,
    checkpoint_nfe,
    hyper_volume,
    kendall_tau,
    normalized_error,
    r_squared,
    score_pipeline,
    selection_accuracy,
)


def _record(alg, fid, combo, dim, rep, err):
    return RunRecord(alg, fid, combo, dim, rep, [(1, err)], err)


# ---------------------------------------------------------------------------
# normalized error

def test_ne_zero_numerator():
    assert normalized_error(1.0, 1.0, 9.0) == 0.0


def test_ne_equal_to_worst():
    assert normalized_error(9.0, 1.0, 9.0) == 1.0


def test_ne_hand_case():
    assert normalized_error(5.0, 1.0, 9.0) == 0.5


def test_ne_degenerate_all_solved():
    assert normalized_error(0.0, 0.0, 0.0) == 0.0


def test_ne_input_errors():
    with pytest.raises(ValueError):
        normalized_error(5.0, 1.0, 4.0)
    with pytest.raises(ValueError):
        normalized_error(0.5, 1.0, 4.0)


# ---------------------------------------------------------------------------
# score pipeline

def test_single_algorithm_scores_100():
    records = [_record("a", "F1", "S", 10, r, 1.0 + r) for r in range(3)]
    board = score_pipeline(records)
    row = board.rows["a"]
    assert row.score1 == 50.0 and row.score2 == 50.0 and row.score == 100.0


def test_identical_algorithms_share_100():
    records = []
    for alg in ("a", "b"):
        for r in range(3):
            records.append(_record(alg, "F1", "S", 10, r, 2.0 + r))
            records.append(_record(alg, "F2", "S", 10, r, 5.0 + r))
    board = score_pipeline(records)
    for alg in ("a", "b"):
        assert board.rows[alg].score == pytest.approx(100.0)
    # two algorithms with equal means share rank 1.5 in both cells
    assert board.rows["a"].sr == pytest.approx(0.5 * (1.5 + 1.5))


def test_three_algorithms_match_spreadsheet_recomputation():
    # hand-built error tables: cells = 2 functions x 2 combos, dims 10 and 20
    rng = np.random.default_rng(17)
    algs = ["a", "b", "c"]
    cells = [(f, c, d) for f in ("F1", "F2") for c in ("none", "S")
             for d in (10, 20)]
    table = {}
    records = []
    for cell in cells:
        for alg in algs:
            errs = rng.uniform(0.0, 5.0, 4)
            table[(alg, cell)] = errs
            for rep, e in enumerate(errs):
                records.append(_record(alg, cell[0], cell[1], cell[2], rep, e))

    board = score_pipeline(records, algorithms=algs)

    # independent straight-line recomputation
    sne = {a: 0.0 for a in algs}
    sr = {a: 0.0 for a in algs}
    for cell in cells:
        best = {a: min(table[(a, cell)]) for a in algs}
        worst = max(best.values())
        means = {a: float(np.mean(table[(a, cell)])) for a in algs}
        order = sorted(algs, key=lambda a: means[a])
        for a in algs:
            sne[a] += 0.5 * (best[a] / worst if best[a] > 0 else 0.0)
            sr[a] += 0.5 * (order.index(a) + 1)  # no ties with continuous draws
    sne_min, sr_min = min(sne.values()), min(sr.values())
    for a in algs:
        assert board.rows[a].sne == pytest.approx(sne[a])
        assert board.rows[a].sr == pytest.approx(sr[a])
        assert board.rows[a].score1 == pytest.approx((1 - (sne[a] - sne_min) / sne[a]) * 50)
        assert board.rows[a].score2 == pytest.approx((1 - (sr[a] - sr_min) / sr[a]) * 50)


def test_rank_sum_conservation_with_ties():
    records = []
    for alg, errs in [("a", [1.0, 1.0]), ("b", [1.0, 1.0]), ("c", [9.0, 9.0])]:
        for rep, e in enumerate(errs):
            records.append(_record(alg, "F1", "S", 10, rep, e))
    board = score_pipeline(records)
    total = sum(row.sr for row in board.rows.values())
    assert total == pytest.approx(0.5 * 1 * 3 * 4 / 2)
    assert board.rows["a"].sr == board.rows["b"].sr


def test_ragged_repetitions_rejected():
    records = [_record("a", "F1", "S", 10, 0, 1.0),
               _record("a", "F1", "S", 10, 1, 2.0),
               _record("b", "F1", "S", 10, 0, 1.0)]
    with pytest.raises(ValueError):
        score_pipeline(records)


def test_missing_cell_rejected():
    records = [_record("a", "F1", "S", 10, 0, 1.0),
               _record("b", "F2", "S", 10, 0, 1.0)]
    with pytest.raises(ValueError):
        score_pipeline(records)


# ---------------------------------------------------------------------------
# hyper-volume

def test_hyper_volume_single_point():
    assert hyper_volume(np.array([[3.0, 4.0, 5.0]])) == 0.0


def test_hyper_volume_rectangle():
    assert hyper_volume(np.array([[0.0, 0.0], [2.0, 3.0]])) == 6.0


def test_hyper_volume_brute_force():
    pts = np.random.default_rng(0).uniform(-5, 5, (5, 3))
    expected = 1.0
    for d in range(3):
        expected *= max(p[d] for p in pts) - min(p[d] for p in pts)
    assert hyper_volume(pts) == pytest.approx(expected)


def test_hyper_volume_accepts_population():
    from pslshade.de_core import Population
    pop = Population(np.array([[0.0, 0.0], [1.0, 2.0]]), np.zeros(2), 0)
    assert hyper_volume(pop) == 2.0


def test_hyper_volume_monotone_under_new_point():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-5, 5, (6, 3))
    hv = hyper_volume(pts)
    assert hyper_volume(np.vstack([pts, rng.uniform(-9, 9, 3)])) >= hv


# ---------------------------------------------------------------------------
# selection accuracy

def test_selection_accuracy_cases():
    assert selection_accuracy([3.0, 1.0, 2.0], 1)
    assert not selection_accuracy([3.0, 1.0, 2.0], 2)
    assert selection_accuracy([2.0, 2.0, 2.0], 2)


# ---------------------------------------------------------------------------
# kendall tau

def test_kendall_identical():
    assert kendall_tau([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)


def test_kendall_reversed():
    assert kendall_tau([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)


def test_kendall_hand_case():
    assert kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(2.0 / 3.0)


def test_kendall_short_or_degenerate_is_missing():
    assert kendall_tau([1.0], [1.0]) is None
    assert kendall_tau([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) is None


# ---------------------------------------------------------------------------
# r squared

def test_r2_exact_fit():
    assert r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0


def test_r2_mean_prediction():
    obs = np.array([1.0, 2.0, 3.0, 6.0])
    assert r_squared(np.full(4, obs.mean()), obs) == 0.0


def test_r2_hand_case():
    obs = np.array([1.0, 2.0, 4.0, 5.0])
    fit = np.array([1.5, 2.5, 3.5, 4.5])
    ss_res = float(np.sum((obs - fit) ** 2))
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    assert r_squared(fit, obs) == pytest.approx(1 - ss_res / ss_tot)


def test_r2_degenerate_is_missing():
    assert r_squared([1.0, 1.0], [2.0, 2.0]) is None
    assert r_squared([1.0], [2.0]) is None


def test_r2_clamped_from_below():
    assert r_squared([10.0, -10.0, 10.0], [1.0, 2.0, 3.0]) == 0.0


# ---------------------------------------------------------------------------
# checkpoint ladder

def test_checkpoint_ladder():
    cps = checkpoint_nfe(10000, 10)
    assert len(cps) == 16
    assert cps[0] == 10
    assert cps[-1] == 10000
    assert all(a <= b for a, b in zip(cps, cps[1:]))
    assert cps[10] == 1000  # D^-1 point
    tiny = checkpoint_nfe(200, 10)
    assert tiny[0] == 1 and tiny[-1] == 200