# Standard Library Imports
import math
import time
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

# Third-Party Imports
import numpy as np
from tqdm import tqdm

# Application-Specific Imports
from config import settings
from models.errors import CalibrationError, InsufficientDataError, InvalidInputError
from models.schemas import (
    NEVER,
    CurveMetadata,
    DetectorSpec,
    ExperimentConfig,
    RecoveryResult,
    Scenario,
    ScenarioSpec,
    StoppingReport,
    TradeoffCurve,
    TradeoffPoint,
    VarianceBounds,
)
from services.detector_factory import build_detector
from services.matrices import SensingMatrix
from services.matrix_factory import build_sensing_matrix
from services.observation_model import generate_block, realize_scenario
from services.recovery import omp, support_recovery_pct
from utils.rng_utils import STREAM_ARL, STREAM_CALIBRATION, STREAM_DELAY, trial_rng
from utils.serialization_utils import config_hash

logger = logging.getLogger(__name__)

ChangePoint = Union[int, str]


@dataclass(frozen=True)
class TemplateSampler:
    """Draws the per-trial Scenario from a ScenarioSpec template."""
    spec: ScenarioSpec
    M: int
    N: int

    def __call__(self, rng: np.random.Generator, change_point: ChangePoint) -> Scenario:
        return realize_scenario(self.spec, self.M, self.N, rng, change_point)


@dataclass(frozen=True)
class ExperimentContext:
    """Everything a trial needs besides the DetectorSpec; shared read-only across workers."""
    matrix: SensingMatrix
    sampler: Callable[[np.random.Generator, ChangePoint], Scenario]
    horizon: int
    seed: int
    change_point: int
    bounds: Optional[VarianceBounds] = None
    threads: int = 1
    min_retained: int = 10
    subset_cap: Optional[int] = None

    @classmethod
    def from_config(cls, config: ExperimentConfig, matrix: Optional[SensingMatrix] = None) -> "ExperimentContext":
        matrix = matrix or build_sensing_matrix(config.matrix)
        return cls(
            matrix=matrix,
            sampler=TemplateSampler(config.scenario, matrix.M, matrix.N),
            horizon=config.horizon,
            seed=config.seed,
            change_point=config.scenario.change_point,
            bounds=config.scenario.variance_bounds,
            threads=config.threads,
            min_retained=config.min_retained,
        )


@dataclass(frozen=True)
class ArlEstimate:
    mean: float
    stderr: float
    censored: int
    lower_bound: bool


@dataclass(frozen=True)
class DelayEstimate:
    mean: float
    stderr: float
    retained: int
    false_alarms: int
    censored: int


# Single trials
def _trial_setup(context: ExperimentContext, stream: int, trial_index: int, nu: Optional[int]):
    rng = trial_rng(context.seed, stream, trial_index)
    scenario = context.sampler(rng, NEVER if nu is None else nu)
    return scenario, rng


def _omp_size(detector, spec: DetectorSpec, scenario, A: SensingMatrix) -> int:
    """Size of the post-detection OMP estimate: the winning track, the known K, or K_max."""
    best_k = getattr(detector, "best_k", None)
    if best_k:
        return best_k
    k = scenario.K if spec.sparsity_known else spec.K_max
    return min(k, A.M, A.N)


def run_trial(context: ExperimentContext, spec: DetectorSpec, nu: Optional[int], trial_index: int,
              threshold: float, stream: int = STREAM_DELAY, record_trace: bool = False) -> StoppingReport:
    """
    One run of a freshly built detector on its own observation stream (nu=None: no change).
    Detectors without an internal support estimate are identified by OMP on y[T].
    """
    scenario, rng = _trial_setup(context, stream, trial_index, nu)
    A = context.matrix
    detector = build_detector(spec, scenario, A, threshold, context.bounds, context.subset_cap)
    detector.record_trace = record_trace

    t, stop, last_y = 0, None, None
    while t < context.horizon:
        count = min(detector.block_size, context.horizon - t)
        Y = generate_block(scenario, A, t, count, rng)
        stop = detector.process_block(Y)
        if stop is not None:
            last_y = Y[stop - t]
            break
        t += count

    support = None
    if stop is not None:
        support = detector.support_estimate()
        if support is None:
            support = sorted(omp(A, last_y, _omp_size(detector, spec, scenario, A)).indices)
    return StoppingReport(
        stopping_time=stop,
        censored=stop is None,
        support_estimate=support,
        true_support=list(scenario.support),
        trace=detector.trace if record_trace else None,
        trial_index=trial_index,
    )


def stopping_times(context: ExperimentContext, spec: DetectorSpec, nu: Optional[int], trial_index: int,
                   thresholds: Sequence[float], stream: int) -> List[Optional[int]]:
    """
    Stopping times of one trial for every threshold at once. The metric path does not depend
    on the threshold, so T(tau) is the first crossing of tau along a single run.
    """
    scenario, rng = _trial_setup(context, stream, trial_index, nu)
    A = context.matrix
    detector = build_detector(spec, scenario, A, max(thresholds), context.bounds, context.subset_cap)

    times: List[Optional[int]] = [None] * len(thresholds)
    t = 0
    while t < context.horizon and any(T is None for T in times):
        count = min(detector.block_size, context.horizon - t)
        W_path, metric = detector.path(generate_block(scenario, A, t, count, rng))
        for j, tau in enumerate(thresholds):
            if times[j] is None:
                hits = np.flatnonzero(metric > tau)
                if hits.size:
                    times[j] = t + int(hits[0])
        detector.advance(W_path, metric, None)
        t += count
    return times


# Trial distribution
_WORKER_CONTEXT: Optional[ExperimentContext] = None


def _init_worker(context: ExperimentContext) -> None:
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = context


def _call_in_worker(item: Tuple[Callable, tuple]) -> Any:
    fn, args = item
    return fn(_WORKER_CONTEXT, *args)


def _progress_disabled() -> bool:
    return not settings.SHOW_PROGRESS or settings.ENV == "test"


def map_trials(context: ExperimentContext, fn: Callable, args_list: List[tuple], desc: str) -> List[Any]:
    """fn(context, *args) for every args tuple; results always come back in input order."""
    if context.threads <= 1 or len(args_list) <= 1:
        return [fn(context, *args) for args in tqdm(args_list, desc=desc, disable=_progress_disabled())]
    chunksize = max(1, len(args_list) // (8 * context.threads))
    with ProcessPoolExecutor(max_workers=context.threads, initializer=_init_worker, initargs=(context,)) as pool:
        results = pool.map(_call_in_worker, [(fn, args) for args in args_list], chunksize=chunksize)
        return list(tqdm(results, total=len(args_list), desc=desc, disable=_progress_disabled()))


def _mean_stderr(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), stderr


def _as_list(thresholds: Union[float, Sequence[float]]) -> Tuple[List[float], bool]:
    if isinstance(thresholds, (int, float)):
        return [float(thresholds)], True
    return [float(t) for t in thresholds], False


# Estimators
def estimate_arl(context: ExperimentContext, spec: DetectorSpec, thresholds: Union[float, Sequence[float]],
                 trials: int, stream: int = STREAM_ARL):
    """
    Average run length under no change. Censored runs count as the horizon, and the estimate
    is then flagged as a lower bound.
    """
    taus, scalar = _as_list(thresholds)
    runs = map_trials(context, stopping_times, [(spec, None, i, taus, stream) for i in range(trials)],
                      desc=f"ARL {spec.name}")
    estimates = []
    for j, tau in enumerate(taus):
        times = [run[j] for run in runs]
        censored = sum(T is None for T in times)
        mean, stderr = _mean_stderr([context.horizon if T is None else T for T in times])
        if censored:
            logger.warning(f"{spec.name} tau={tau:g}: {censored}/{trials} no-change runs censored at {context.horizon}")
        estimates.append(ArlEstimate(mean=mean, stderr=stderr, censored=censored, lower_bound=censored > 0))
    return estimates[0] if scalar else estimates


def estimate_delay(context: ExperimentContext, spec: DetectorSpec, thresholds: Union[float, Sequence[float]],
                   trials: int, nu: Optional[int] = None):
    """
    Mean of T - nu over runs with T >= nu; earlier alarms are counted as false alarms and
    dropped. Censored runs contribute horizon - nu.
    """
    nu = context.change_point if nu is None else nu
    if nu >= context.horizon:
        raise InvalidInputError(f"Change point {nu} must lie before the horizon {context.horizon}")
    taus, scalar = _as_list(thresholds)
    runs = map_trials(context, stopping_times, [(spec, nu, i, taus, STREAM_DELAY) for i in range(trials)],
                      desc=f"Delay {spec.name}")
    estimates = []
    for j, tau in enumerate(taus):
        times = [run[j] for run in runs]
        false_alarms = sum(T is not None and T < nu for T in times)
        censored = sum(T is None for T in times)
        delays = [context.horizon - nu if T is None else T - nu for T in times if T is None or T >= nu]
        if len(delays) < context.min_retained:
            raise InsufficientDataError(
                f"{spec.name} tau={tau:g}: only {len(delays)} of {trials} delay runs survived past nu={nu}"
            )
        mean, stderr = _mean_stderr(delays)
        estimates.append(DelayEstimate(mean=mean, stderr=stderr, retained=len(delays),
                                       false_alarms=false_alarms, censored=censored))
    return estimates[0] if scalar else estimates


def tradeoff_curve(context: ExperimentContext, spec: DetectorSpec, thresholds: Sequence[float], trials: int,
                   arl_trials: int, config_digest: str) -> TradeoffCurve:
    start = time.perf_counter()
    arls = estimate_arl(context, spec, list(thresholds), arl_trials)
    delays = estimate_delay(context, spec, list(thresholds), trials)
    points = [
        TradeoffPoint(
            threshold=tau,
            arl=a.mean,
            arl_stderr=a.stderr,
            arl_censored=a.censored,
            arl_lower_bound=a.lower_bound,
            delay=d.mean,
            delay_stderr=d.stderr,
            delay_retained=d.retained,
            false_alarms=d.false_alarms,
            delay_censored=d.censored,
        )
        for tau, a, d in zip(thresholds, arls, delays)
    ]
    wall_time = time.perf_counter() - start
    logger.info(f"Curve for {spec.name}: {len(points)} point(s) in {wall_time:.1f}s")
    return TradeoffCurve(
        detector=spec.name,
        points=points,
        metadata=CurveMetadata(
            config_hash=config_digest,
            seed=context.seed,
            trials=trials,
            arl_trials=arl_trials,
            horizon=context.horizon,
            change_point=context.change_point,
            wall_time=wall_time,
        ),
    )


def sweep(config: ExperimentConfig, matrix: Optional[SensingMatrix] = None) -> List[TradeoffCurve]:
    """One T_r / D_w tradeoff curve per configured detector over the threshold grid."""
    context = ExperimentContext.from_config(config, matrix)
    digest = config_hash(config.model_dump())
    arl_trials = config.arl_trials or config.trials
    logger.info(f"Sweep '{config.name}': {len(config.detectors)} detector(s), {len(config.thresholds)} threshold(s), "
                f"{config.trials} delay / {arl_trials} ARL trials, matrix {context.matrix.kind.value} "
                f"{context.matrix.M}x{context.matrix.N} (alpha={context.matrix.coherence:.4f})")
    return [tradeoff_curve(context, spec, config.thresholds, config.trials, arl_trials, digest)
            for spec in config.detectors]


def calibrate_threshold(context: ExperimentContext, spec: DetectorSpec, target_arl: float, trials: int,
                        tol: float = 0.2, max_iter: int = 40) -> Tuple[float, ArlEstimate]:
    """
    Bisection on log(tau) until the estimated ARL is within tol (relative) of the target.
    Starts from tau = log(target), since ARL grows roughly like exp(tau).
    """
    tau = max(math.log(target_arl), 1e-3)
    lo = hi = None
    estimate = None
    for _ in range(max_iter):
        estimate = estimate_arl(context, spec, tau, trials, stream=STREAM_CALIBRATION)
        logger.debug(f"Calibrating {spec.name}: tau={tau:.5g} -> ARL {estimate.mean:.1f}")
        if abs(estimate.mean / target_arl - 1.0) <= tol:
            logger.info(f"Calibrated {spec.name}: tau={tau:.5g}, ARL {estimate.mean:.1f} (target {target_arl:g})")
            return tau, estimate
        if estimate.mean < target_arl:
            lo = tau
        else:
            hi = tau
        if hi is None:
            tau *= 2.0
        elif lo is None:
            tau /= 2.0
        else:
            if hi / lo < 1.0 + 1e-9:
                break
            tau = math.sqrt(lo * hi)
    achieved = estimate.mean if estimate else math.nan
    logger.warning(f"Calibration of {spec.name} missed target {target_arl:g} (achieved {achieved:.1f} at tau={tau:.5g})")
    raise CalibrationError(
        f"Could not calibrate {spec.name} to ARL {target_arl:g}: achieved {achieved:.1f} at tau={tau:.5g}",
        achieved_arl=achieved,
        threshold=tau,
    )


def identification_pct(context: ExperimentContext, spec: DetectorSpec, threshold: float, trials: int,
                       nu: Optional[int] = None) -> Tuple[float, float, int]:
    """Mean support recovery (%) at the stopping time over runs that stop at or after nu."""
    nu = context.change_point if nu is None else nu
    reports = map_trials(context, run_trial, [(spec, nu, i, threshold) for i in range(trials)],
                         desc=f"Recovery {spec.name}")
    scores = [support_recovery_pct(r.support_estimate, r.true_support)
              for r in reports if not r.censored and r.stopping_time >= nu]
    if len(scores) < context.min_retained:
        raise InsufficientDataError(f"{spec.name}: only {len(scores)} of {trials} runs detected after nu={nu}")
    mean, stderr = _mean_stderr(scores)
    return mean, stderr, len(scores)


def recovery_study(config: ExperimentConfig, matrix: Optional[SensingMatrix] = None) -> List[RecoveryResult]:
    """Calibrate every detector to the target ARL, then score support recovery at the stopping time."""
    context = ExperimentContext.from_config(config, matrix)
    results = []
    for spec in config.detectors:
        tau, arl = calibrate_threshold(context, spec, config.target_arl, config.calibration_trials)
        pct, stderr, used = identification_pct(context, spec, tau, config.trials)
        logger.info(f"Recovery {spec.name}: {pct:.1f}% +/- {stderr:.1f} at ARL {arl.mean:.0f}")
        results.append(RecoveryResult(detector=spec.name, threshold=tau, achieved_arl=arl.mean,
                                      recovery_pct=pct, recovery_stderr=stderr, trials=used))
    return results


def detect(config: ExperimentConfig, detector_index: int = 0, change_point: Optional[int] = None,
           no_change: bool = False, trial_index: int = 0, record_trace: bool = False,
           matrix: Optional[SensingMatrix] = None) -> StoppingReport:
    """A single run of one configured detector at its own threshold (or the first grid threshold)."""
    if detector_index >= len(config.detectors):
        raise InvalidInputError(f"Detector index {detector_index} out of range ({len(config.detectors)} configured)")
    spec = config.detectors[detector_index]
    context = ExperimentContext.from_config(config, matrix)
    nu = None if no_change else (config.scenario.change_point if change_point is None else change_point)
    threshold = spec.threshold or config.thresholds[0]
    stream = STREAM_ARL if no_change else STREAM_DELAY
    return run_trial(context, spec, nu, trial_index, threshold, stream=stream, record_trace=record_trace)
