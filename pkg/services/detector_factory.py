# Standard Library Imports
import logging
from typing import Optional

# Third-Party Imports
import numpy as np

# Application-Specific Imports
from config import settings
from models.errors import ConfigurationError, UnsupportedError
from models.schemas import DetectorSpec, DetectorVariant, Scenario, VarianceBounds
from services.detectors import (
    AggregateCusum,
    CorrelatorCusum,
    CusumDetector,
    EnergyCusum,
    IdealCusum,
    OptimalCusum,
    ParallelKCusum,
    PseCusum,
)
from services.matrices import SensingMatrix, row_orthonormal_scale
from services.sgd_detectors import SgdAggregateCusum, SgdCorrelatorCusum, SgdEnergyCusum
from services.statistics import (
    SignalPower,
    aggregate_model,
    correlator_model,
    energy_model,
    post_change_model,
    pre_change_model,
    pse_model,
    worst_case_variance,
)

logger = logging.getLogger(__name__)


def signal_power(spec: DetectorSpec, scenario: Scenario, bounds: Optional[VarianceBounds]) -> SignalPower:
    """Common sigma_x^2 when variances are known, otherwise the bounds (models then use sigma_min^2)."""
    if spec.variance_known:
        return float(np.mean(scenario.signal_variances))
    if bounds is None:
        raise ConfigurationError(f"Detector {spec.name} treats variances as unknown but the scenario has no variance bounds")
    return bounds


def _single_k(spec: DetectorSpec, scenario: Scenario, matrix: SensingMatrix, threshold: float, k: int,
              sigma: SignalPower, subset_cap: int) -> CusumDetector:
    A, M, N = matrix.data, matrix.M, matrix.N
    alpha, sn2 = matrix.coherence, scenario.noise_variance
    variant = spec.variant

    if variant == DetectorVariant.OPTIMAL:
        return OptimalCusum(threshold, A, k, worst_case_variance(sigma), sn2, subset_cap)
    if variant == DetectorVariant.AGGREGATE:
        return AggregateCusum(threshold, A, k, aggregate_model(alpha, k, sigma, sn2))
    if variant == DetectorVariant.ENERGY:
        return EnergyCusum(threshold, energy_model(alpha, k, sigma, sn2, M))
    if variant == DetectorVariant.CORRELATOR:
        return CorrelatorCusum(threshold, A, correlator_model(alpha, k, N, sigma, sn2))
    if variant == DetectorVariant.PSE:
        scale = row_orthonormal_scale(matrix)
        K_p = min(spec.K_p or k, k)
        energy = scale * k * worst_case_variance(sigma)
        return PseCusum(threshold, A, K_p, pse_model(M, N, k, K_p, energy, sn2), sn2)
    if variant == DetectorVariant.SGD_AGGREGATE:
        return SgdAggregateCusum(threshold, A, k, sn2, a=spec.a, c=spec.c)
    if variant == DetectorVariant.SGD_ENERGY:
        return SgdEnergyCusum(threshold, M, sn2, K=k, a=spec.a, c=spec.c)
    if variant == DetectorVariant.SGD_CORRELATOR:
        return SgdCorrelatorCusum(threshold, A, k, alpha, worst_case_variance(sigma), sn2, a=spec.a, c=spec.c)
    raise ConfigurationError(f"No single-k construction for {variant.value}")


def build_detector(spec: DetectorSpec, scenario: Scenario, matrix: SensingMatrix, threshold: Optional[float] = None,
                   bounds: Optional[VarianceBounds] = None, subset_cap: Optional[int] = None) -> CusumDetector:
    """
    Detector for one trial. Ideal uses the scenario's true support and variances; the others
    see only K (or K_max), the coherence and the signal power they are given.
    """
    threshold = spec.threshold if threshold is None else threshold
    if threshold is None:
        raise ConfigurationError(f"No threshold given for detector {spec.name}")
    if (matrix.M, matrix.N) != (scenario.M, scenario.N):
        raise ConfigurationError(f"Matrix is {matrix.M}x{matrix.N} but scenario expects {scenario.M}x{scenario.N}")
    subset_cap = subset_cap or spec.subset_cap or settings.OPTIMAL_SUBSET_CAP

    if spec.variant == DetectorVariant.IDEAL:
        model0 = pre_change_model(scenario.M, scenario.noise_variance)
        model1 = post_change_model(matrix, scenario.support, scenario.signal_variances, scenario.noise_variance)
        detector = IdealCusum(threshold, model0, model1)
    else:
        sigma = signal_power(spec, scenario, bounds)
        if spec.sparsity_known:
            detector = _single_k(spec, scenario, matrix, threshold, scenario.K, sigma, subset_cap)
        elif spec.variant == DetectorVariant.SGD_CORRELATOR:
            raise UnsupportedError("Correlator-SGD cannot run with unknown sparsity")
        elif spec.variant == DetectorVariant.SGD_ENERGY:
            # theta absorbs K: one track instead of one per k
            detector = SgdEnergyCusum(threshold, matrix.M, scenario.noise_variance, K=None,
                                      sigma_min_sq=worst_case_variance(sigma), a=spec.a, c=spec.c)
        else:
            tracks = [_single_k(spec, scenario, matrix, threshold, k, sigma, subset_cap)
                      for k in range(1, min(spec.K_max, matrix.N) + 1)]
            detector = ParallelKCusum(threshold, tracks)
    detector.name = spec.name
    return detector
