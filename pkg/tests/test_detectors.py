import sys
import os
os.environ["ENV"] = "test"
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import math

import numpy as np
import pytest

from models.errors import CapacityError, InvalidInputError
from models.schemas import MatrixKind, Scenario
from services.detectors import (
    AggregateCusum,
    CorrelatorCusum,
    EnergyCusum,
    IdealCusum,
    OptimalCusum,
    ParallelKCusum,
    PseCusum,
    cusum_path,
    cusum_step,
    top_k_indices,
    top_k_sum,
)
from services.matrices import random_matrix, unitary_matrix
from services.observation_model import complex_normal, generate_block
from services.statistics import (
    GaussianVecModel,
    aggregate_model,
    correlator_model,
    energy_model,
    llr_gaussian_vec,
    post_change_model,
    pre_change_model,
    pse_model,
)


def _scalar_models(sigma_x_sq=2.0):
    return GaussianVecModel([[1.0]]), GaussianVecModel([[1.0 + sigma_x_sq]])


def _scalar_reference(ys, threshold, sigma_x_sq=2.0):
    """Plain loop CUSUM for M = N = K = 1."""
    W = 0.0
    for t, y in enumerate(ys):
        llr = abs(y) ** 2 * (1.0 - 1.0 / (1.0 + sigma_x_sq)) - math.log(1.0 + sigma_x_sq)
        W = max(W + llr, 0.0)
        if W > threshold:
            return t
    return None


def test_cusum_step():
    assert cusum_step(0.0, -1.0) == 0.0
    assert cusum_step(2.0, 1.5) == 3.5
    assert cusum_step(1.25, 0.0) == 1.25


def test_cusum_path_matches_recursion():
    rng = np.random.default_rng(0)
    L = rng.standard_normal((200, 3))
    W0 = np.array([0.0, 1.5, 4.0])
    path = cusum_path(W0, L)
    W = W0.copy()
    for t in range(200):
        W = np.maximum(W + L[t], 0.0)
        assert np.allclose(path[t], W)
    assert np.all(path >= 0.0)


def test_ideal_matches_scalar_reference():
    model0, model1 = _scalar_models()
    rng = np.random.default_rng(1)
    for _ in range(200):
        ys = complex_normal(rng, (300, 1), 1.0 + 2.0 * rng.uniform())
        detector = IdealCusum(4.0, model0, model1)
        detector.process_block(ys)
        assert detector.stopping_time == _scalar_reference(ys[:, 0], 4.0)


def test_block_splitting_does_not_change_stopping_time():
    model0, model1 = _scalar_models()
    ys = complex_normal(np.random.default_rng(2), (500, 1), 3.0)
    whole = IdealCusum(20.0, model0, model1)
    whole.process_block(ys)
    pieces = IdealCusum(20.0, model0, model1)
    for start in range(0, 500, 7):
        if pieces.process_block(ys[start:start + 7]) is not None:
            break
    assert whole.stopping_time is not None
    assert pieces.stopping_time == whole.stopping_time


def test_step_interface():
    model0, model1 = _scalar_models()
    detector = IdealCusum(1e-9, model0, model1)
    assert detector.step(np.array([3.0 + 0j]))
    assert detector.stopping_time == 0
    assert detector.fired
    detector.reset()
    assert not detector.fired and detector.metric == 0.0


def test_equal_models_never_fire():
    model = pre_change_model(2, 1.0)
    detector = IdealCusum(0.5, model, model)
    assert detector.process_block(complex_normal(np.random.default_rng(3), (2000, 2), 5.0)) is None
    assert detector.metric == 0.0


def test_raising_threshold_never_stops_earlier():
    model0, model1 = _scalar_models()
    ys = complex_normal(np.random.default_rng(4), (3000, 1), 1.3)
    times = []
    for tau in [0.5, 1.0, 2.0, 4.0, 8.0]:
        detector = IdealCusum(tau, model0, model1)
        detector.process_block(ys)
        times.append(detector.stopping_time if detector.fired else math.inf)
    assert times == sorted(times)


def test_threshold_must_be_positive():
    model0, model1 = _scalar_models()
    with pytest.raises(InvalidInputError):
        IdealCusum(0.0, model0, model1)


def test_trace_records_metric():
    model0, model1 = _scalar_models()
    detector = IdealCusum(1e6, model0, model1)
    detector.record_trace = True
    detector.process_block(complex_normal(np.random.default_rng(5), (50, 1), 1.0))
    assert len(detector.trace) == 50
    assert all(v >= 0.0 for v in detector.trace)


def test_optimal_woodbury_matches_exact_llr():
    A = random_matrix(MatrixKind.GAUSSIAN, 4, 6, np.random.default_rng(6))
    detector = OptimalCusum(10.0, A, 2, 1.5, 0.8)
    Y = complex_normal(np.random.default_rng(7), (5, 4), 1.0)
    llr = detector.llr_block(Y)
    model0 = pre_change_model(4, 0.8)
    for c, candidate in enumerate(detector.candidates):
        model1 = post_change_model(A, candidate, [1.5, 1.5], 0.8)
        assert np.allclose(llr[:, c], llr_gaussian_vec(Y, model0, model1))


def test_optimal_single_candidate_is_ideal():
    A = unitary_matrix(3, seed=8)
    optimal = OptimalCusum(5.0, A, 3, 2.0, 1.0)
    ideal = IdealCusum(5.0, pre_change_model(3, 1.0), post_change_model(A, [0, 1, 2], [2.0] * 3, 1.0))
    Y = complex_normal(np.random.default_rng(9), (400, 3), 2.0)
    optimal.process_block(Y)
    ideal.process_block(Y)
    assert optimal.stopping_time == ideal.stopping_time
    assert optimal.support_estimate() == [0, 1, 2]


def test_optimal_true_candidate_has_largest_drift():
    A = unitary_matrix(3, seed=10)
    scenario = Scenario(M=3, N=3, K=1, support=[1], signal_variances=[1.0], noise_variance=1.0, change_point=0)
    detector = OptimalCusum(1e9, A, 1, 1.0, 1.0)
    Y = generate_block(scenario, A, 0, 10_000, np.random.default_rng(11))
    assert int(np.argmax(detector.llr_block(Y).mean(axis=0))) == 1


def test_optimal_capacity():
    A = random_matrix(MatrixKind.GAUSSIAN, 5, 30, np.random.default_rng(12))
    with pytest.raises(CapacityError):
        OptimalCusum(1.0, A, 5, 1.0, 1.0, subset_cap=10_000)


def test_top_k_helpers():
    W = np.array([1.0, 3.0, 3.0, 2.0])
    assert top_k_sum(W[None, :], 2)[0] == 6.0
    assert top_k_sum(W[None, :], 4)[0] == 9.0
    assert top_k_indices(W, 2) == [1, 2]
    assert top_k_indices(np.array([2.0, 2.0, 2.0]), 2) == [0, 1]


def test_aggregate_zero_correlation_keeps_tracks_at_zero():
    A = unitary_matrix(6, seed=13)
    detector = AggregateCusum(1.0, A, 2, aggregate_model(0.0, 2, 1.0, 1.0))
    detector.process_block(np.zeros((20, 6), dtype=complex))
    assert np.all(detector.state.W == 0.0)
    assert not detector.fired


def test_aggregate_with_k_equal_n_sums_all_tracks():
    A = unitary_matrix(3, seed=14)
    detector = AggregateCusum(1e9, A, 3, aggregate_model(0.0, 3, 1.0, 1.0))
    detector.process_block(complex_normal(np.random.default_rng(15), (30, 3), 3.0))
    assert detector.metric == pytest.approx(detector.state.W.sum())


def test_aggregate_identifies_support_at_high_snr():
    A = unitary_matrix(8, seed=16)
    model = aggregate_model(0.0, 1, 10.0, 1.0)
    rng = np.random.default_rng(17)
    hits = 0
    for _ in range(100):
        support = [int(rng.integers(8))]
        scenario = Scenario(M=8, N=8, K=1, support=support, signal_variances=[10.0], noise_variance=1.0, change_point=0)
        detector = AggregateCusum(5.0, A, 1, model)
        detector.process_block(generate_block(scenario, A, 0, 200, rng))
        hits += detector.support_estimate() == support
    assert hits >= 95


def test_energy_drifts():
    M, K = 31, 3
    sigma_sq = 31 * 0.1 / 3
    A = unitary_matrix(M, seed=18)
    model = energy_model(0.0, K, sigma_sq, 1.0, M)
    detector = EnergyCusum(1e9, model)
    noise = complex_normal(np.random.default_rng(19), (100_000, M), 1.0)
    assert detector.llr_block(noise).mean() < 0
    scenario = Scenario(M=M, N=M, K=K, support=[0, 5, 9], signal_variances=[sigma_sq] * K, noise_variance=1.0,
                        change_point=0)
    post = generate_block(scenario, A, 0, 50_000, np.random.default_rng(20))
    assert detector.llr_block(post).mean() > 0


def test_correlator_pre_change_drift_is_negative():
    A = unitary_matrix(8, seed=21)
    detector = CorrelatorCusum(1e9, A, correlator_model(0.0, 1, 8, 1.0, 1.0))
    noise = complex_normal(np.random.default_rng(22), (100_000, 8), 1.0)
    assert detector.llr_block(noise).mean() < 0


def test_pse_with_oracle_support():
    A = unitary_matrix(6, seed=23)
    calls = []

    def oracle(A_, y, k):
        calls.append(k)
        return [4, 1]

    flat = pse_model(6, 6, 2, 2, 0.0, 1.0)
    detector = PseCusum(1e-3, A, 2, flat, 1.0, recovery_fn=oracle)
    detector.process_block(complex_normal(np.random.default_rng(24), (10, 6), 1.0))
    assert not detector.fired
    assert calls == [2] * 10
    assert detector.support_estimate() == [1, 4]


def test_pse_fires_on_strong_signal():
    A = unitary_matrix(6, seed=25)
    scenario = Scenario(M=6, N=6, K=2, support=[0, 3], signal_variances=[20.0, 20.0], noise_variance=1.0,
                        change_point=0)
    detector = PseCusum(5.0, A, 2, pse_model(6, 6, 2, 2, 40.0, 1.0), 1.0)
    stop = detector.process_block(generate_block(scenario, A, 0, 100, np.random.default_rng(26)))
    assert stop is not None
    assert len(detector.support_estimate()) == 2


def test_parallel_k_with_one_track_matches_single_detector():
    A = unitary_matrix(8, seed=27)
    Y = generate_block(
        Scenario(M=8, N=8, K=1, support=[3], signal_variances=[3.0], noise_variance=1.0, change_point=10),
        A, 0, 400, np.random.default_rng(28),
    )
    single = AggregateCusum(4.0, A, 1, aggregate_model(0.0, 1, 3.0, 1.0))
    wrapped = ParallelKCusum(4.0, [AggregateCusum(4.0, A, 1, aggregate_model(0.0, 1, 3.0, 1.0))])
    single.process_block(Y)
    wrapped.process_block(Y)
    assert wrapped.stopping_time == single.stopping_time
    assert wrapped.best_k == 1
    assert wrapped.support_estimate() == single.support_estimate()


def test_parallel_k_fires_on_max_track():
    A = unitary_matrix(8, seed=29)
    Y = generate_block(
        Scenario(M=8, N=8, K=2, support=[1, 6], signal_variances=[4.0, 4.0], noise_variance=1.0, change_point=0),
        A, 0, 300, np.random.default_rng(30),
    )
    tracks = [AggregateCusum(6.0, A, k, aggregate_model(0.0, k, 4.0, 1.0)) for k in (1, 2, 3)]
    detector = ParallelKCusum(6.0, tracks)
    stop = detector.process_block(Y)
    assert stop is not None
    assert detector.metric > 6.0
    assert detector.best_k in (1, 2, 3)
    assert detector.describe()["K_max"] == 3
    detector.reset()
    assert detector.best_k is None and not any(t.fired for t in tracks)


@pytest.mark.parametrize("statistic", ["energy", "correlator"])
def test_true_sparsity_track_has_largest_post_change_drift(statistic):
    A = unitary_matrix(16, seed=31)
    scenario = Scenario(M=16, N=16, K=3, support=[2, 7, 11], signal_variances=[4.0] * 3,
                        noise_variance=1.0, change_point=0)
    Y = generate_block(scenario, A, 0, 20_000, np.random.default_rng(32))
    if statistic == "energy":
        tracks = [EnergyCusum(1e9, energy_model(0.0, k, 4.0, 1.0, 16)) for k in range(1, 7)]
    else:
        tracks = [CorrelatorCusum(1e9, A, correlator_model(0.0, k, 16, 4.0, 1.0)) for k in range(1, 7)]
    drifts = [float(track.llr_block(Y).mean()) for track in tracks]
    assert int(np.argmax(drifts)) + 1 == 3
