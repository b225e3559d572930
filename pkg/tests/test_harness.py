import sys
import os
os.environ["ENV"] = "test"
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import dataclasses
import math

import numpy as np
import pytest

from models.errors import CalibrationError, InsufficientDataError, InvalidInputError
from models.schemas import DetectorSpec, DetectorVariant, ExperimentConfig
from services.harness import (
    ExperimentContext,
    calibrate_threshold,
    detect,
    estimate_arl,
    estimate_delay,
    identification_pct,
    recovery_study,
    run_trial,
    stopping_times,
    sweep,
)
from services.statistics import kl_gaussian_vec, post_change_model, pre_change_model
from utils.rng_utils import STREAM_DELAY

IDEAL = DetectorSpec(variant=DetectorVariant.IDEAL)


def _config(**overrides) -> ExperimentConfig:
    data = {
        "name": "small",
        "scenario": {"K": 1, "sigma_x_sq": 2.0, "support": [0], "change_point": 20},
        "matrix": {"kind": "unitary", "M": 2, "seed": 0},
        "detectors": [{"variant": "ideal"}, {"variant": "aggregate"}],
        "thresholds": [2.0, 4.0],
        "trials": 40,
        "horizon": 100_000,
        "seed": 7,
    }
    data.update(overrides)
    return ExperimentConfig(**data)


@pytest.fixture
def context():
    return ExperimentContext.from_config(_config())


def test_context_from_config(context):
    assert (context.matrix.M, context.matrix.N) == (2, 2)
    assert context.change_point == 20
    assert context.seed == 7


def test_trials_are_reproducible(context):
    first = run_trial(context, IDEAL, 20, 3, 4.0)
    again = run_trial(context, IDEAL, 20, 3, 4.0)
    assert first == again
    assert first.true_support == [0]


def test_single_run_matches_multi_threshold_run(context):
    times = stopping_times(context, IDEAL, 20, 5, [1.0, 3.0, 6.0], STREAM_DELAY)
    for tau, T in zip([1.0, 3.0, 6.0], times):
        assert run_trial(context, IDEAL, 20, 5, tau).stopping_time == T
    assert times == sorted(times)


def test_arl_exceeds_exponential_lower_bound(context):
    estimate = estimate_arl(context, IDEAL, 3.0, 300)
    assert estimate.censored == 0
    assert not estimate.lower_bound
    assert estimate.mean > 0.8 * math.exp(3.0)


def test_arl_accepts_threshold_lists(context):
    estimates = estimate_arl(context, IDEAL, [1.0, 2.0, 3.0], 50)
    assert len(estimates) == 3
    assert [e.mean for e in estimates] == sorted(e.mean for e in estimates)


def test_censored_runs_make_a_lower_bound(context):
    short = dataclasses.replace(context, horizon=50)
    estimate = estimate_arl(short, IDEAL, 1e6, 20)
    assert estimate.mean == 50.0
    assert estimate.censored == 20
    assert estimate.lower_bound


def test_censored_delay_runs_count_the_horizon(context):
    short = dataclasses.replace(context, horizon=60)
    estimate = estimate_delay(short, IDEAL, 1e6, 20)
    assert estimate.mean == 40.0
    assert estimate.censored == 20
    assert estimate.retained == 20


def test_delay_grows_with_threshold(context):
    estimates = estimate_delay(context, IDEAL, [1.0, 2.0, 4.0, 8.0], 50, nu=0)
    means = [e.mean for e in estimates]
    assert means == sorted(means)
    assert all(e.false_alarms == 0 for e in estimates)


def test_delay_without_survivors(context):
    with pytest.raises(InsufficientDataError):
        estimate_delay(context, IDEAL, 1e-6, 20, nu=30)


def test_change_point_must_precede_horizon(context):
    with pytest.raises(InvalidInputError):
        estimate_delay(dataclasses.replace(context, horizon=30), IDEAL, 1.0, 5, nu=30)


def test_parallel_matches_serial(context):
    serial = estimate_arl(context, IDEAL, [1.0, 2.0], 24)
    parallel = estimate_arl(dataclasses.replace(context, threads=2), IDEAL, [1.0, 2.0], 24)
    assert serial == parallel


def test_calibration_reaches_target(context):
    tau, estimate = calibrate_threshold(context, IDEAL, 50.0, 200, tol=0.3)
    assert tau > 0
    assert abs(estimate.mean / 50.0 - 1.0) <= 0.3


def test_calibration_failure(context):
    short = dataclasses.replace(context, horizon=20)
    with pytest.raises(CalibrationError) as excinfo:
        calibrate_threshold(short, IDEAL, 1000.0, 10, max_iter=5)
    assert excinfo.value.achieved_arl == 20.0


def test_identification_at_high_snr():
    context = ExperimentContext.from_config(_config(scenario={"K": 1, "sigma_x_sq": 20.0, "change_point": 0}))
    aggregate = DetectorSpec(variant=DetectorVariant.AGGREGATE)
    mean, stderr, used = identification_pct(context, aggregate, 10.0, 30)
    assert used == 30
    assert mean == 100.0
    assert stderr == 0.0


def test_sweep_produces_one_curve_per_detector():
    config = _config(
        scenario={"K": 1, "sigma_x_sq": 2.0, "support": [0], "change_point": 5},
        thresholds=[5.0, 8.0],
        trials=20,
    )
    curves = sweep(config)
    assert [c.detector for c in curves] == ["ideal", "aggregate"]
    for curve in curves:
        assert [p.threshold for p in curve.points] == [5.0, 8.0]
        assert curve.metadata.trials == 20
        assert curve.metadata.arl_trials == 20
        assert all(p.arl > 0 for p in curve.points)


def test_detect_single_run():
    config = _config()
    report = detect(config, detector_index=1, record_trace=True)
    assert report.trace is not None
    assert report.stopping_time is not None
    assert len(report.trace) == report.stopping_time + 1
    assert report.support_estimate is not None
    quiet = detect(config, no_change=True, trial_index=2)
    assert quiet.true_support == [0]
    with pytest.raises(InvalidInputError):
        detect(config, detector_index=5)


def test_recovery_study_calibrates_each_detector():
    config = _config(
        scenario={"K": 1, "sigma_x_sq": 20.0, "support": [0], "change_point": 20},
        detectors=[{"variant": "aggregate"}],
        trials=30,
        target_arl=100.0,
        calibration_trials=200,
    )
    results = recovery_study(config)
    assert [r.detector for r in results] == ["aggregate"]
    result = results[0]
    assert abs(result.achieved_arl / 100.0 - 1.0) <= 0.2
    assert 0.0 <= result.recovery_pct <= 100.0
    assert 1 <= result.trials <= 30


ALL_VARIANTS = [v.value for v in DetectorVariant]


def test_sweep_runs_every_variant():
    config = _config(
        scenario={"K": 1, "sigma_x_sq": 4.0, "support": [1], "change_point": 5},
        matrix={"kind": "unitary", "M": 4, "seed": 0},
        detectors=[{"variant": v} for v in ALL_VARIANTS]
                  + [{"variant": "aggregate", "sparsity_known": False, "K_max": 2}],
        thresholds=[5.0],
        trials=12,
        min_retained=1,
        horizon=2_000,
    )
    curves = sweep(config)
    assert [c.detector for c in curves] == ALL_VARIANTS + ["aggregate_kmax2"]
    for curve in curves:
        point = curve.points[0]
        assert point.arl > 0
        assert point.delay >= 0


@pytest.mark.parametrize("variant", ["aggregate", "correlator", "optimal", "pse", "sgd_aggregate"])
def test_detect_reports_support_for_matrix_based_detectors(variant):
    config = _config(
        scenario={"K": 1, "sigma_x_sq": 4.0, "support": [1], "change_point": 5},
        matrix={"kind": "unitary", "M": 4, "seed": 0},
        detectors=[{"variant": variant}],
        thresholds=[5.0],
    )
    report = detect(config)
    assert not report.censored
    assert len(report.support_estimate) == 1


def test_unknown_sparsity_support_size_comes_from_k_max():
    config = _config(
        scenario={"K": 1, "sigma_x_sq": 4.0, "support": [1], "change_point": 5},
        matrix={"kind": "unitary", "M": 4, "seed": 0},
        detectors=[{"variant": "sgd_energy", "sparsity_known": False, "K_max": 3}],
        thresholds=[5.0],
    )
    report = detect(config)
    assert not report.censored
    assert len(report.support_estimate) == 3


@pytest.mark.slow
def test_delay_grows_like_log_arl_over_kl():
    config = _config(scenario={"K": 2, "sigma_x_sq": 1.0, "support": [0, 3], "change_point": 0},
                     matrix={"kind": "unitary", "M": 8, "seed": 0})
    context = ExperimentContext.from_config(config)
    taus = [4.0, 6.0, 8.0]
    arls = estimate_arl(context, IDEAL, taus, 300)
    delays = estimate_delay(context, IDEAL, taus, 500, nu=0)
    slope = np.polyfit([math.log(a.mean) for a in arls], [d.mean for d in delays], 1)[0]
    kl = kl_gaussian_vec(post_change_model(context.matrix, [0, 3], [1.0, 1.0], 1.0), pre_change_model(8, 1.0))
    assert slope == pytest.approx(1.0 / kl, rel=0.3)


def _scalar_cusum_times(sigma_x_sq, post, thresholds, trials, horizon, rng):
    """
    Direct simulation of W <- max(W + l(y), 0) for M = N = K = 1, unit noise. |y|^2 is
    exponential with mean 1 (pre-change) or 1 + sigma_x^2 (post-change). Returns the first
    0-based t with W > tau for every threshold, the horizon when never crossed.
    """
    var1 = 1.0 + sigma_x_sq
    offset, slope = -math.log(var1), 1.0 - 1.0 / var1
    thresholds = np.asarray(sorted(thresholds))
    W = np.zeros(trials)
    times = np.full((len(thresholds), trials), horizon)
    alive = np.arange(trials)
    for t in range(horizon):
        power = rng.exponential(var1 if post else 1.0, alive.size)
        W[alive] = np.maximum(W[alive] + offset + slope * power, 0.0)
        rows, cols = np.nonzero((W[alive][None, :] > thresholds[:, None]) & (times[:, alive] == horizon))
        times[rows, alive[cols]] = t
        alive = alive[times[-1, alive] == horizon]
        if not alive.size:
            break
    return times


def _agrees(estimate, stderr, reference):
    ref_mean = float(reference.mean())
    ref_se = float(reference.std(ddof=1)) / math.sqrt(reference.size)
    return abs(estimate - ref_mean) <= max(0.05 * ref_mean, 4.0 * math.hypot(stderr, ref_se))


@pytest.mark.slow
def test_scalar_ideal_matches_direct_simulation():
    taus, trials, horizon = [2.0, 5.0, 8.0], 20_000, 1_000_000
    config = _config(scenario={"K": 1, "sigma_x_sq": 4.0, "support": [0], "change_point": 0},
                     matrix={"kind": "unitary", "M": 1, "seed": 0}, horizon=horizon)
    context = ExperimentContext.from_config(config)
    arls = estimate_arl(context, IDEAL, taus, trials)
    delays = estimate_delay(context, IDEAL, taus, trials, nu=0)

    rng = np.random.default_rng(2024)
    pre = _scalar_cusum_times(4.0, False, taus, trials, horizon, rng)
    post = _scalar_cusum_times(4.0, True, taus, trials, horizon, rng)
    for j in range(len(taus)):
        assert arls[j].censored == 0
        assert _agrees(arls[j].mean, arls[j].stderr, pre[j])
        assert _agrees(delays[j].mean, delays[j].stderr, post[j])
