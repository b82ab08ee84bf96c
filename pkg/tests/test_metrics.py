import math
from collections import Counter

import numpy as np
import pytest

from config import RunConfig
from errors import ConfigError, DataError, MetricUndefinedError
from features import FeatureVector
from metrics import (
    ConfusionCounts, accuracy, compare, comparison_table, confusion, dr, er, selected_group,
    selection_table, split, write_comparison_csv, write_selection_csv,
)
from mkl import SelectionRow


def _series(rng, normal=30, attack=30, gap=6.0):
    """Labeled windows with attack windows shifted up in both features."""
    out = []
    for k in range(normal + attack):
        label = 1 if k < normal else -1
        shift = 0.0 if label == 1 else gap
        sfv_value, cdf_value = np.abs(rng.normal(1.0 + shift, 0.6, size=2))
        out.append(FeatureVector(k, 0, 0, 0, 0, 0, sfv=float(sfv_value), cdf=float(cdf_value), label=label))
    return out


def _labels(n_normal, n_attack):
    labels = [1] * n_normal + [-1] * n_attack
    return [FeatureVector(k, 0, 0, 0, 0, 0, 0, 0, label=lab) for k, lab in enumerate(labels)]


# ── confusion ────────────────────────────────────────────────


def test_confusion_all_attacks_caught():
    assert confusion([-1] * 5, [-1] * 5) == ConfusionCounts(tp=0, fp=0, tn=5, fn=0)


def test_confusion_everything_wrong():
    truth = [1, -1, -1, 1, -1]
    c = confusion([-t for t in truth], truth)
    assert c.tp == 0 and c.tn == 0
    assert c.fp == 2 and c.fn == 3


def test_confusion_hand_tabulated():
    predicted = [1, 1, -1, -1, 1, -1]
    truth = [1, -1, -1, 1, 1, -1]
    # normal→normal at 0,4; attack→normal at 1; attack→attack at 2,5; normal→attack at 3
    assert confusion(predicted, truth) == ConfusionCounts(tp=2, fp=1, tn=2, fn=1)


def test_confusion_row_sums(rng):
    truth = rng.choice([1, -1], size=200)
    predicted = rng.choice([1, -1], size=200)
    c = confusion(predicted, truth)
    assert c.tp + c.fp == int(np.sum(truth == 1))
    assert c.tn + c.fn == int(np.sum(truth == -1))
    assert c.total == 200


@pytest.mark.parametrize(
    "predicted, truth",
    [([1, -1], [1]), ([], []), ([1, 0], [1, -1])],
)
def test_confusion_rejects_bad_input(predicted, truth):
    with pytest.raises(ValueError):
        confusion(predicted, truth)


# ── dr / er ──────────────────────────────────────────────────


def test_detection_rate():
    assert dr(ConfusionCounts(tp=0, fp=0, tn=88, fn=12)) == pytest.approx(0.88)


def test_perfect_prediction():
    c = confusion([1, 1, -1, -1], [1, 1, -1, -1])
    assert dr(c) == 1.0
    assert er(c) == 0.0
    assert accuracy(c) == 1.0


def test_reported_early_attack_result():
    # 147 test windows (63 normal, 84 attack): 10 attacks missed, no false alarms
    c = ConfusionCounts(tp=63, fp=0, tn=74, fn=10)
    assert c.total == 147
    assert round(dr(c), 3) == 0.881
    assert round(er(c), 3) == 0.068


def test_undefined_metrics():
    with pytest.raises(MetricUndefinedError):
        dr(ConfusionCounts(tp=4, fp=1, tn=0, fn=0))
    with pytest.raises(MetricUndefinedError):
        er(ConfusionCounts(0, 0, 0, 0))
    with pytest.raises(MetricUndefinedError):
        accuracy(ConfusionCounts(0, 0, 0, 0))


def test_metrics_stay_in_unit_interval(rng):
    for _ in range(200):
        n = int(rng.integers(1, 40))
        truth = rng.choice([1, -1], size=n)
        truth[0] = -1
        c = confusion(rng.choice([1, -1], size=n), truth)
        assert 0.0 <= dr(c) <= 1.0
        assert 0.0 <= er(c) <= 1.0
        assert accuracy(c) == pytest.approx(1.0 - er(c))


# ── split ────────────────────────────────────────────────────


def test_split_sizes_for_a_full_trace():
    samples = _labels(211, 280)
    train, test = split(samples, 0.7, seed=1)
    assert (len(train), len(test)) == (344, 147)
    counts = Counter(v.label for v in train)
    assert abs(counts[1] - 211 * 344 / 491) <= 1
    assert abs(counts[-1] - 280 * 344 / 491) <= 1


@pytest.mark.parametrize("n_normal, n_attack", [(384, 107), (80, 411), (116, 116), (3, 9)])
def test_split_is_stratified(n_normal, n_attack):
    samples = _labels(n_normal, n_attack)
    train, test = split(samples, seed=3)
    total = n_normal + n_attack
    assert len(train) == math.floor(0.7 * total + 0.5)
    assert len(train) + len(test) == total
    for label, size in ((1, n_normal), (-1, n_attack)):
        in_train = sum(1 for v in train if v.label == label)
        assert 1 <= in_train <= size - 1
        assert abs(in_train - size * len(train) / total) <= 1


def test_split_is_deterministic_and_keeps_order():
    samples = _labels(211, 280)
    a = split(samples, seed=5)
    assert a == split(samples, seed=5)
    assert a[0] != split(samples, seed=6)[0]
    for part in a:
        idx = [v.window_index for v in part]
        assert idx == sorted(idx)


def test_split_errors():
    with pytest.raises(ConfigError):
        split(_labels(10, 10), 1.0)
    with pytest.raises(DataError):
        split(_labels(10, 1))
    with pytest.raises(DataError):
        split(_labels(10, 10) + [FeatureVector(20, 0, 0, 0, 0, 0, 0, 0)])


# ── compare ──────────────────────────────────────────────────


def test_duplicate_methods_score_identically(rng):
    train, test = split(_series(rng))
    first, second = compare(["smkl", "smkl"], train, test)
    assert first.counts == second.counts
    assert (first.dr, first.er) == (second.dr, second.er)


def test_compare_is_deterministic(rng):
    train, test = split(_series(rng))
    a = compare(["svm", "rgmkl"], train, test)
    b = compare(["svm", "rgmkl"], train, test)
    assert [(r.counts, r.detail) for r in a] == [(r.counts, r.detail) for r in b]


def test_separated_windows_are_detected(rng):
    train, test = split(_series(rng, gap=10.0))
    for result in compare(["svm", "smkl", "gmkl", "rgmkl"], train, test):
        assert result.dr == 1.0, result.title
        assert result.er == 0.0, result.title


def test_rgmkl_reports_its_selection(rng):
    train, test = split(_series(rng, gap=3.0))
    (result,) = compare(["rgmkl"], train, test)
    assert [row.group for row in result.selection] == [1, 2, 3, 4]
    assert result.detail


def test_compare_errors(rng):
    train, test = split(_series(rng))
    with pytest.raises(ConfigError):
        compare([], train, test)
    with pytest.raises(ConfigError):
        compare(["knn"], train, test)
    unlabeled = [FeatureVector(v.window_index, 0, 0, 0, 0, 0, v.sfv, v.cdf) for v in test]
    with pytest.raises(DataError):
        compare(["svm"], train, unlabeled)


def test_compare_uses_configured_features(rng):
    train, test = split(_series(rng, gap=10.0))
    (result,) = compare(["smkl"], train, test, RunConfig(features=("sfv",)))
    assert result.dr == 1.0


# ── Reports ──────────────────────────────────────────────────


def test_comparison_csv(tmp_path, rng):
    train, test = split(_series(rng, gap=10.0))
    results = compare(["svm", "smkl"], train, test)
    path = write_comparison_csv(results, tmp_path / "report" / "compare.csv")
    assert path.read_text().splitlines() == [
        "method,DR,ER",
        "SVM,1.000000,0.000000",
        "Simple MKL,1.000000,0.000000",
    ]
    assert comparison_table(results).row_count == 2


def test_selection_report(tmp_path):
    report = [
        SelectionRow(1, "product", "l1", 0.31, 0.9),
        SelectionRow(2, "sum", "l1", 0.12, 0.95),
        SelectionRow(3, "product", "l2", math.nan, math.nan, "bias is zero"),
        SelectionRow(4, "sum", "l2", 0.4, 0.88),
    ]
    assert selected_group(report) == 2
    lines = write_selection_csv(report, tmp_path / "selection.csv").read_text().splitlines()
    assert lines[0] == "group,family,regularizer,R,accuracy,error"
    assert lines[2] == "2,sum,l1,0.12,0.950000,"
    assert lines[3] == "3,product,l2,,,bias is zero"
    assert selection_table(report, selected=2).row_count == 4


def test_selected_group_edge_cases():
    lone = [SelectionRow(1, "sum", "l2", math.nan, math.nan, "bias is zero")]
    assert selected_group(lone) == 1
    failed = lone + [SelectionRow(2, "sum", "l1", math.nan, math.nan, "no convergence")]
    assert selected_group(failed) is None
