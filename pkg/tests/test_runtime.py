"""Dispatch, reload counting, cost model and evaluation tests."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from approxgate.benchmarks import Dataset, evaluate_exact, get_benchmark
from approxgate.mlp import Mlp, Topology, init_mlp
from approxgate.pipelines import TrainedSystem
from approxgate.runtime import (
    CostModelParams,
    count_reloads,
    dispatch,
    evaluate,
    model_cost,
    read_report,
    route_name,
    write_report,
    write_routes_csv,
)

PW = get_benchmark("piecewise3")  # absolute metric, bound 0.1, target_scale 4


def fixed_softmax_net(input_dim, logit_weights, logit_biases):
    """Single-layer softmax net with hand-chosen logits."""
    n_out = len(logit_biases)
    m = init_mlp(Topology((input_dim, n_out), output_activation="softmax"), 0)
    m.weights[0][:] = np.asarray(logit_weights, dtype=float)
    m.biases[0][:] = np.asarray(logit_biases, dtype=float)
    return m


def constant_net(input_dim, value):
    """Linear net that outputs a constant regardless of input."""
    m = init_mlp(Topology((input_dim, 1)), 0)
    m.weights[0][:] = 0.0
    m.biases[0][0] = value
    return m


def mcma_piecewise_system():
    """Routes by normalized x: A1 below ~1/3, A2 in the middle, cpu above.

    Logits over (nC, A1, A2): l0 = 30*xn - 20, l1 = 10 - 24*xn, l2 = 0.
    """
    clf = fixed_softmax_net(1, [[30.0, -24.0, 0.0]], [-20.0, 10.0, 0.0])
    a1 = constant_net(1, 1.75 / PW.target_scale)  # outputs 1.75
    a2 = constant_net(1, 4.85 / PW.target_scale)  # outputs 4.85
    return TrainedSystem(
        architecture="mcma",
        approximators=[a1, a2],
        classifiers=[clf],
        benchmark_name="piecewise3",
        error_bound=0.1,
        allocation="complementary",
    )


def make_dataset(xs):
    inputs = np.asarray(xs, dtype=float).reshape(-1, 1)
    outputs = np.vstack([evaluate_exact(PW, x) for x in inputs])
    return Dataset(
        benchmark_name="piecewise3",
        inputs=inputs,
        outputs=outputs,
        train_indices=np.array([], dtype=int),
        test_indices=np.arange(len(inputs)),
        generation_seed=0,
        train_fraction=0.5,
    )


# ---------------------------------------------------------------------------
# dispatch


def test_mcma_dispatch_cpu_when_nc_wins():
    clf = fixed_softmax_net(1, [[0.0, 0.0, 0.0]], np.log([0.7, 0.2, 0.1]))
    system = TrainedSystem(
        architecture="mcma",
        approximators=[constant_net(1, 0.0), constant_net(1, 0.0)],
        classifiers=[clf],
        benchmark_name="piecewise3",
        error_bound=0.1,
    )
    result = dispatch(system, PW, np.array([0.5]))
    assert result.route == 0
    assert result.classifier_evals == 1
    assert result.confidence == pytest.approx(0.7, abs=1e-9)
    # cpu routes return the exact value
    assert np.array_equal(result.output, evaluate_exact(PW, np.array([0.5])))


def test_mcma_dispatch_argmax_route():
    clf = fixed_softmax_net(1, [[0.0, 0.0, 0.0]], np.log([0.1, 0.3, 0.6]))
    a2 = constant_net(1, 0.5)
    system = TrainedSystem(
        architecture="mcma",
        approximators=[constant_net(1, 0.0), a2],
        classifiers=[clf],
        benchmark_name="piecewise3",
        error_bound=0.1,
    )
    result = dispatch(system, PW, np.array([0.5]))
    assert result.route == 2
    assert result.output[0] == pytest.approx(0.5 * PW.target_scale)


def test_mcca_dispatch_walks_cascade():
    reject = fixed_softmax_net(1, [[0.0, 0.0]], [5.0, 0.0])
    approve = fixed_softmax_net(1, [[0.0, 0.0]], [0.0, 5.0])
    system = TrainedSystem(
        architecture="mcca",
        approximators=[constant_net(1, 0.25), constant_net(1, 0.5)],
        classifiers=[reject, approve],
        benchmark_name="piecewise3",
        error_bound=0.1,
    )
    result = dispatch(system, PW, np.array([0.5]))
    assert result.route == 2
    assert result.classifier_evals == 2
    # everything rejected -> cpu after all classifiers
    system_all_reject = TrainedSystem(
        architecture="mcca",
        approximators=[constant_net(1, 0.25), constant_net(1, 0.5)],
        classifiers=[reject, reject],
        benchmark_name="piecewise3",
        error_bound=0.1,
    )
    result = dispatch(system_all_reject, PW, np.array([0.5]))
    assert result.route == 0
    assert result.classifier_evals == 2


def test_binary_dispatch():
    approve = fixed_softmax_net(1, [[0.0, 0.0]], [0.0, 5.0])
    system = TrainedSystem(
        architecture="one_pass",
        approximators=[constant_net(1, 0.25)],
        classifiers=[approve],
        benchmark_name="piecewise3",
        error_bound=0.1,
    )
    result = dispatch(system, PW, np.array([0.5]))
    assert result.route == 1 and result.classifier_evals == 1


def test_dispatch_validates_dims():
    system = mcma_piecewise_system()
    with pytest.raises(ValueError):
        dispatch(system, PW, np.array([0.5, 0.5]))


# ---------------------------------------------------------------------------
# count_reloads


def test_reload_examples():
    assert count_reloads([1, 1, 2, 1], "one_fits") == 3
    assert count_reloads([1, 0, 1], "one_fits") == 1  # cpu does not evict
    assert count_reloads([1, 1, 2, 1], "all_fit") == 0
    assert count_reloads([1, 0, 2, 2], "none_fit") == 3
    assert count_reloads([], "one_fits") == 0
    with pytest.raises(ValueError):
        count_reloads([1], "bogus")


def reload_oracle(routes, case):
    """Independent formulation: runs of equal approximators after
    filtering cpu routes."""
    routed = [r for r in routes if r != 0]
    if case == "all_fit":
        return 0
    if case == "none_fit":
        return len(routed)
    return len([1 for _, _ in itertools.groupby(routed)])


def test_reloads_match_enumeration_oracle():
    for length in range(0, 7):
        for seq in itertools.product([0, 1, 2], repeat=length):
            for case in ("all_fit", "none_fit", "one_fits"):
                assert count_reloads(seq, case) == reload_oracle(seq, case), (seq, case)


@given(st.lists(st.integers(0, 3), max_size=30), st.integers(0, 30))
@settings(max_examples=200, deadline=None)
def test_one_fits_invariant_to_cpu_insertion(routes, pos):
    cut = min(pos, len(routes))
    inserted = routes[:cut] + [0] + routes[cut:]
    assert count_reloads(routes, "one_fits") == count_reloads(inserted, "one_fits")
    assert count_reloads(routes, "all_fit") == 0


# ---------------------------------------------------------------------------
# model_cost


def test_model_cost_documented_value():
    params = CostModelParams(t_cpu=1.0, t_apx=0.1, t_cls=0.05, t_reload=0.01)
    speedup, energy = model_cost(
        n_samples=1000, cls_evals=1000, n_approx_routed=900, n_cpu_routed=100,
        reloads=0, params=params,
    )
    assert speedup == pytest.approx(1 / 0.24, abs=1e-9)
    assert energy == pytest.approx(1 / 0.24, abs=1e-9)


def test_model_cost_pure_cpu_is_unity():
    params = CostModelParams(t_cls=0.0, e_cls=0.0)
    speedup, energy = model_cost(100, 100, 0, 100, 0, params)
    assert speedup == 1.0
    assert energy == 1.0


def test_model_cost_scale_invariance():
    a = CostModelParams(t_cpu=1.0, t_apx=0.1, t_cls=0.05, t_reload=0.01)
    b = CostModelParams(t_cpu=2.0, t_apx=0.2, t_cls=0.10, t_reload=0.02)
    sa, _ = model_cost(50, 50, 30, 20, 4, a)
    sb, _ = model_cost(50, 50, 30, 20, 4, b)
    assert sa == pytest.approx(sb, rel=1e-12)


def test_model_cost_validates():
    params = CostModelParams()
    with pytest.raises(ValueError):
        model_cost(0, 0, 0, 0, 0, params)
    with pytest.raises(ValueError):
        model_cost(10, 10, 4, 4, 0, params)  # 4 + 4 != 10
    with pytest.raises(ValueError):
        CostModelParams(t_cpu=-1.0)
    with pytest.raises(ValueError):
        CostModelParams(buffer_case="half_fit")


@given(
    n=st.integers(10, 1000),
    n1=st.integers(0, 1000),
    n2=st.integers(0, 1000),
)
@settings(max_examples=200, deadline=None)
def test_speedup_monotone_in_invocation(n, n1, n2):
    # with t_apx + t_cls < t_cpu and reloads fixed, more routed samples
    # can only help
    params = CostModelParams(t_cpu=1.0, t_apx=0.3, t_cls=0.2, t_reload=0.05)
    lo, hi = sorted((min(n1, n), min(n2, n)))
    s_lo, _ = model_cost(n, n, lo, n - lo, 3, params)
    s_hi, _ = model_cost(n, n, hi, n - hi, 3, params)
    assert s_hi >= s_lo - 1e-12


# ---------------------------------------------------------------------------
# evaluate


def test_evaluate_three_sample_hand_case():
    system = mcma_piecewise_system()
    dataset = make_dataset([0.5, 1.5, 2.5])  # exact outputs 1.8, 5.0, 9.8
    params = CostModelParams()  # one_fits
    artifacts = evaluate(system, PW, dataset, params)
    assert list(artifacts.routes) == [1, 2, 0]
    report = artifacts.report
    assert report.invocation == pytest.approx(2 / 3)
    # A1 output 1.75 vs 1.8 -> 0.05 (safe); A2 output 4.85 vs 5.0 -> 0.15 (unsafe)
    assert report.confusion_counts == {"AC": 1, "nAC": 1, "AnC": 0, "nAnC": 1}
    assert report.rmse_normalized == pytest.approx(np.sqrt((0.05**2 + 0.15**2) / 2) / 0.1)
    assert report.per_class_counts == [1, 1, 1]
    assert report.cls_evals == 3
    assert report.reload_count == 2  # initial A1 load, then switch to A2
    t_sys = 3 * 0.05 + 2 * 0.1 + 1 * 1.0 + 2 * 0.01
    assert report.modeled_speedup == pytest.approx(3 * 1.0 / t_sys)
    assert report.modeled_energy_reduction == pytest.approx(3 * 1.0 / t_sys)


def test_evaluate_routes_match_dispatch():
    system = mcma_piecewise_system()
    dataset = make_dataset([0.2, 0.8, 1.4, 2.1, 2.9])
    artifacts = evaluate(system, PW, dataset)
    for i, x in enumerate(dataset.test_inputs):
        assert artifacts.routes[i] == dispatch(system, PW, x).route


def test_evaluate_order_changes_only_reloads():
    system = mcma_piecewise_system()
    a = evaluate(system, PW, make_dataset([0.5, 1.5, 0.6, 2.5]))
    b = evaluate(system, PW, make_dataset([0.5, 0.6, 1.5, 2.5]))
    assert a.report.reload_count == 3  # A1, A2, A1 switches
    assert b.report.reload_count == 2  # A1, A1, A2
    assert a.report.invocation == b.report.invocation
    assert a.report.rmse_normalized == pytest.approx(b.report.rmse_normalized)
    assert a.report.confusion_counts == b.report.confusion_counts
    assert sorted(a.report.per_class_counts) == sorted(b.report.per_class_counts)


def test_evaluate_degenerate_all_cpu_gate():
    clf = fixed_softmax_net(1, [[0.0, 0.0]], [5.0, 0.0])  # always reject
    system = TrainedSystem(
        architecture="one_pass",
        approximators=[constant_net(1, 0.0)],
        classifiers=[clf],
        benchmark_name="piecewise3",
        error_bound=0.1,
    )
    dataset = make_dataset([0.5, 1.5, 2.5])
    artifacts = evaluate(system, PW, dataset)
    assert artifacts.report.invocation == 0.0
    # classifier overhead only: T = n*t_cls + n*t_cpu
    expected = 3 * 1.0 / (3 * 0.05 + 3 * 1.0)
    assert artifacts.report.modeled_speedup == pytest.approx(expected)


def test_evaluate_validates():
    system = mcma_piecewise_system()
    dataset = make_dataset([0.5])
    wrong = Dataset(
        benchmark_name="kmeans",
        inputs=dataset.inputs,
        outputs=dataset.outputs,
        train_indices=dataset.train_indices,
        test_indices=dataset.test_indices,
        generation_seed=0,
        train_fraction=0.5,
    )
    with pytest.raises(ValueError, match="does not match"):
        evaluate(system, PW, wrong)
    empty = Dataset(
        benchmark_name="piecewise3",
        inputs=dataset.inputs,
        outputs=dataset.outputs,
        train_indices=np.arange(1),
        test_indices=np.array([], dtype=int),
        generation_seed=0,
        train_fraction=0.5,
    )
    with pytest.raises(ValueError, match="empty"):
        evaluate(system, PW, empty)


def test_report_file_round_trip(tmp_path):
    system = mcma_piecewise_system()
    artifacts = evaluate(system, PW, make_dataset([0.5, 1.5, 2.5]))
    path = tmp_path / "report.txt"
    write_report(path, artifacts.report, "piecewise3", "mcma")
    back = read_report(path)
    assert back["benchmark"] == "piecewise3"
    assert float(back["invocation"]) == artifacts.report.invocation
    assert int(back["reload_count"]) == artifacts.report.reload_count
    assert float(back["modeled_speedup"]) == artifacts.report.modeled_speedup
    write_routes_csv(tmp_path / "routes.csv", artifacts.routes, artifacts.confidences)
    lines = (tmp_path / "routes.csv").read_text().splitlines()
    assert lines[0] == "sample_index,route,confidence"
    assert lines[1].startswith("0,A1,")


def test_route_name():
    assert route_name(0) == "cpu"
    assert route_name(3) == "A3"
