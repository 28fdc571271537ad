"""Labeling, confusion and aggregation tests with brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from approxgate.benchmarks import get_benchmark
from approxgate.quality import (
    SampleVerdict,
    aggregate_report,
    batch_errors,
    confusion_of,
    is_safe,
    label_competitive,
    label_complementary,
    mean_nearest_neighbor_distance,
    sample_error,
)

BS = get_benchmark("blackscholes")  # relative metric
PW = get_benchmark("piecewise3")  # absolute metric
JM = get_benchmark("jmeint")  # misclassification metric


# ---------------------------------------------------------------------------
# sample_error / is_safe


def test_relative_error_definition():
    assert abs(sample_error(BS, np.array([11.0]), np.array([10.0])) - 0.1) < 1e-12


def test_zero_error_when_equal():
    assert sample_error(BS, np.array([10.0]), np.array([10.0])) == 0.0
    assert sample_error(PW, np.array([3.0]), np.array([3.0])) == 0.0


def test_absolute_error_definition():
    assert abs(sample_error(PW, np.array([3.25]), np.array([3.0])) - 0.25) < 1e-12


def test_misclassification_error():
    assert sample_error(JM, np.array([0.9, 0.1]), np.array([0.0, 1.0])) == 1.0
    assert sample_error(JM, np.array([0.2, 0.7]), np.array([0.0, 1.0])) == 0.0


def test_sample_error_validates_lengths():
    with pytest.raises(ValueError):
        sample_error(BS, np.array([1.0, 2.0]), np.array([1.0]))


def test_batch_errors_matches_scalar():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(10, 2))
    e = rng.normal(size=(10, 2))
    iv = get_benchmark("inversek2j")
    batch = batch_errors(iv, a, e)
    for i in range(10):
        assert abs(batch[i] - sample_error(iv, a[i], e[i])) < 1e-15


def test_is_safe_boundary_inclusive():
    assert is_safe(0.05, 0.1)
    assert is_safe(0.1, 0.1)  # boundary counts as safe
    assert not is_safe(0.11, 0.1)
    with pytest.raises(ValueError):
        is_safe(0.1, 0.0)


# ---------------------------------------------------------------------------
# labeling


def test_label_complementary_first_qualifying_wins():
    errors = np.array([[0.05, 0.02]])
    assert label_complementary(errors, 0.1)[0] == 1


def test_label_complementary_second_when_first_fails():
    errors = np.array([[0.2, 0.05]])
    assert label_complementary(errors, 0.1)[0] == 2


def test_label_complementary_none_qualifies():
    errors = np.array([[0.2, 0.3]])
    assert label_complementary(errors, 0.1)[0] == 0


def test_label_competitive_lowest_error_wins():
    errors = np.array([[0.3, 0.1]])
    assert label_competitive(errors, 0.2)[0] == 2


def test_label_competitive_tie_breaks_low():
    errors = np.array([[0.05, 0.05]])
    assert label_competitive(errors, 0.1)[0] == 1


def test_label_competitive_all_over_bound_is_nc():
    errors = np.array([[0.5, 0.4]])
    assert label_competitive(errors, 0.1)[0] == 0


def test_label_competitive_two_approx_truth_table():
    # exhaustive over below/above-bound combinations for 2 approximators
    bound = 0.1
    lo, hi = 0.05, 0.5
    for e1 in (lo, hi):
        for e2 in (lo + 0.01, hi + 0.1):
            got = label_competitive(np.array([[e1, e2]]), bound)[0]
            best = 0 if e1 <= e2 else 1
            expected = best + 1 if min(e1, e2) <= bound else 0
            assert got == expected


def test_labeling_rejects_empty():
    with pytest.raises(ValueError):
        label_complementary(np.zeros((0, 2)), 0.1)
    with pytest.raises(ValueError):
        label_competitive(np.zeros((0, 2)), 0.1)


error_matrices = arrays(
    dtype=float,
    shape=st.tuples(st.integers(1, 20), st.integers(1, 5)),
    elements=st.floats(min_value=0.0, max_value=1.0),
)


@given(error_matrices, st.floats(min_value=0.01, max_value=0.9))
@settings(max_examples=200, deadline=None)
def test_complementary_prefix_rejection_property(errors, bound):
    labels = label_complementary(errors, bound)
    for i, label in enumerate(labels):
        if label == 0:
            assert (errors[i] > bound).all()
        else:
            assert errors[i, label - 1] <= bound
            assert (errors[i, : label - 1] > bound).all()


@given(error_matrices, st.floats(min_value=0.01, max_value=0.9))
@settings(max_examples=200, deadline=None)
def test_competitive_matches_brute_force(errors, bound):
    labels = label_competitive(errors, bound)
    for i, label in enumerate(labels):
        best, best_err = 0, None
        for k in range(errors.shape[1]):
            if best_err is None or errors[i, k] < best_err:
                best, best_err = k + 1, errors[i, k]
        expected = best if best_err <= bound else 0
        assert label == expected


# ---------------------------------------------------------------------------
# confusion and aggregation


def test_confusion_categories():
    bound = 0.1
    assert confusion_of(1, np.array([0.05]), bound) == "AC"
    assert confusion_of(1, np.array([0.2]), bound) == "nAC"
    assert confusion_of(0, np.array([0.05]), bound) == "AnC"
    assert confusion_of(0, np.array([0.2]), bound) == "nAnC"
    # cpu-routed: ground truth uses the best approximator
    assert confusion_of(0, np.array([0.3, 0.08]), bound) == "AnC"
    # routed to a specific approximator: its own error decides
    assert confusion_of(2, np.array([0.05, 0.3]), bound) == "nAC"


def make_verdict(i, errors, pred, bound):
    return SampleVerdict(
        sample_index=i,
        per_approx_error=tuple(errors),
        assigned_label=0,
        classifier_prediction=pred,
        confusion=confusion_of(pred, np.array(errors), bound),
    )


def test_invocation_ratio():
    bound = 0.1
    verdicts = [make_verdict(i, [0.05], 1 if i < 90 else 0, bound) for i in range(100)]
    report = aggregate_report(verdicts, bound, n_classes=2)
    assert report.invocation == 0.9


def test_rmse_normalized_identity():
    bound = 0.1
    verdicts = [make_verdict(i, [bound], 1, bound) for i in range(10)]
    report = aggregate_report(verdicts, bound, n_classes=2)
    assert abs(report.rmse_normalized - 1.0) < 1e-12


def test_three_sample_confusion_hand_case():
    bound = 0.1
    # sample 0: routed to A1, error 0.05   -> AC
    # sample 1: routed to A2, error 0.15   -> nAC
    # sample 2: cpu-routed, best error 0.05 -> AnC
    verdicts = [
        make_verdict(0, [0.05, 0.30], 1, bound),
        make_verdict(1, [0.30, 0.15], 2, bound),
        make_verdict(2, [0.05, 0.30], 0, bound),
    ]
    report = aggregate_report(verdicts, bound, n_classes=3)
    assert report.confusion_counts == {"AC": 1, "nAC": 1, "AnC": 1, "nAnC": 0}
    assert report.invocation == pytest.approx(2 / 3)
    expected_rmse = np.sqrt((0.05**2 + 0.15**2) / 2) / bound
    assert report.rmse_normalized == pytest.approx(expected_rmse)
    assert report.per_class_counts == [1, 1, 1]


@given(
    arrays(dtype=float, shape=st.tuples(st.integers(1, 30), st.just(2)),
           elements=st.floats(min_value=0.0, max_value=1.0)),
    st.lists(st.integers(0, 2), min_size=30, max_size=30),
    st.floats(min_value=0.05, max_value=0.5),
)
@settings(max_examples=100, deadline=None)
def test_confusion_partition_property(errors, preds, bound):
    verdicts = [
        make_verdict(i, list(errors[i]), preds[i], bound) for i in range(len(errors))
    ]
    report = aggregate_report(verdicts, bound, n_classes=3)
    assert sum(report.confusion_counts.values()) == len(errors)
    assert sum(report.per_class_counts) == len(errors)


@given(st.floats(min_value=0.1, max_value=10.0))
@settings(max_examples=50, deadline=None)
def test_rmse_normalized_scale_consistency(scale):
    bound = 0.2
    errors = [0.05, 0.15, 0.18]
    verdicts_base = [make_verdict(i, [e], 1, bound) for i, e in enumerate(errors)]
    verdicts_scaled = [
        make_verdict(i, [e * scale], 1, bound * scale) for i, e in enumerate(errors)
    ]
    a = aggregate_report(verdicts_base, bound, n_classes=2)
    b = aggregate_report(verdicts_scaled, bound * scale, n_classes=2)
    assert a.rmse_normalized == pytest.approx(b.rmse_normalized, rel=1e-9)


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate_report([], 0.1, n_classes=2)


def test_all_samples_rmse_variant():
    bound = 0.1
    verdicts = [
        make_verdict(0, [0.1], 1, bound),
        make_verdict(1, [0.1], 0, bound),
    ]
    routed_only = aggregate_report(verdicts, bound, n_classes=2)
    with_cpu = aggregate_report(verdicts, bound, n_classes=2, include_cpu_routed=True)
    assert routed_only.rmse_normalized == pytest.approx(1.0)
    assert with_cpu.rmse_normalized == pytest.approx(np.sqrt(0.5))


def test_mean_nearest_neighbor_distance():
    # two tight pairs: every point's nearest neighbor is at distance 0.1
    pts = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.0, 5.1]])
    assert mean_nearest_neighbor_distance(pts) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        mean_nearest_neighbor_distance(np.array([[1.0, 2.0]]))
