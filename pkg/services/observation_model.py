# Standard Library Imports
import math
import logging
from dataclasses import dataclass
from typing import List, Optional

# Third-Party Imports
import numpy as np

# Application-Specific Imports
from models.errors import ConfigurationError
from models.schemas import Scenario, ScenarioSpec, NEVER
from services.matrices import SensingMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Observation:
    t: int
    y: np.ndarray


def complex_normal(rng: np.random.Generator, shape, variance) -> np.ndarray:
    """
    CN(0, variance) samples: real and imaginary parts independent N(0, variance/2),
    so E|z|^2 = variance. `variance` may broadcast against `shape`.
    """
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _check_dimensions(scenario: Scenario, A: SensingMatrix) -> None:
    if A.data.shape != (scenario.M, scenario.N):
        raise ConfigurationError(
            f"Sensing matrix is {A.data.shape[0]}x{A.data.shape[1]} but scenario expects {scenario.M}x{scenario.N}"
        )


def generate_observation(scenario: Scenario, A: SensingMatrix, t: int, rng: np.random.Generator) -> Observation:
    """Draw y[t]: pure noise before the change point, A_S x_S[t] + n[t] from it on."""
    _check_dimensions(scenario, A)
    y = complex_normal(rng, scenario.M, scenario.noise_variance)
    if scenario.is_post_change(t):
        x_s = complex_normal(rng, scenario.K, np.asarray(scenario.signal_variances))
        y = y + A.data[:, scenario.support] @ x_s
    return Observation(t=t, y=y)


def generate_block(scenario: Scenario, A: SensingMatrix, t0: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Rows are y[t0], ..., y[t0+count-1]. Same law as repeated generate_observation,
    drawn in one call so Monte Carlo trials avoid per-step overhead.
    """
    _check_dimensions(scenario, A)
    Y = complex_normal(rng, (count, scenario.M), scenario.noise_variance)
    if scenario.never_changes:
        return Y
    first_post = max(0, scenario.change_point - t0)
    if first_post < count:
        n_post = count - first_post
        X = complex_normal(rng, (n_post, scenario.K), np.asarray(scenario.signal_variances)[None, :])
        Y[first_post:] += X @ A.data[:, scenario.support].T
    return Y


def snr_to_sigma_x(snr_db: float, M: int, K: int, sigma_n_sq: float) -> float:
    """Common sigma_x^2 with 10 log10(K sigma_x^2 / (M sigma_n^2)) = snr_db."""
    return M * sigma_n_sq * 10.0 ** (snr_db / 10.0) / K


def snr_of_scenario(scenario: Scenario, M: Optional[int] = None) -> float:
    M = scenario.M if M is None else M
    return 10.0 * math.log10(sum(scenario.signal_variances) / (M * scenario.noise_variance))


def common_variance(spec: ScenarioSpec, M: int) -> Optional[float]:
    """The known common sigma_x^2 of a template, or None when variances are drawn from bounds."""
    if spec.sigma_x_sq is not None:
        return spec.sigma_x_sq
    if spec.snr_db is not None:
        return snr_to_sigma_x(spec.snr_db, M, spec.K, spec.noise_variance)
    return None


def realize_scenario(spec: ScenarioSpec, M: int, N: int, rng: np.random.Generator,
                     change_point=None) -> Scenario:
    """
    Concrete Scenario for one trial. Random supports are drawn uniformly without
    replacement; bounded variances are drawn uniformly in [sigma_min^2, sigma_max^2].
    """
    if spec.K > N:
        raise ConfigurationError(f"K={spec.K} exceeds N={N}")
    if spec.support is not None:
        support: List[int] = list(spec.support)
    else:
        support = sorted(int(i) for i in rng.choice(N, size=spec.K, replace=False))

    sigma_sq = common_variance(spec, M)
    if sigma_sq is not None:
        variances = [sigma_sq] * spec.K
    else:
        bounds = spec.variance_bounds
        variances = [float(v) for v in rng.uniform(bounds.sigma_min_sq, bounds.sigma_max_sq, size=spec.K)]

    try:
        return Scenario(
            M=M,
            N=N,
            K=spec.K,
            support=support,
            signal_variances=variances,
            noise_variance=spec.noise_variance,
            change_point=spec.change_point if change_point is None else change_point,
        )
    except ValueError as e:
        raise ConfigurationError(f"Invalid scenario: {e}") from e


def no_change(scenario: Scenario) -> Scenario:
    return scenario.model_copy(update={"change_point": NEVER})
