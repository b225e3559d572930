# Standard Library Imports
import logging
from dataclasses import dataclass
from typing import List, Tuple

# Third-Party Imports
import numpy as np

# Application-Specific Imports
from models.errors import InvalidInputError
from models.schemas import (
    CodeFamily,
    IdentificationPoint,
    MatrixKind,
    RandomAccessConfig,
    RandomAccessResult,
    Scenario,
)
from services.gold_codes import gold_capacity, gold_codes_for_offsets, gold_family
from services.harness import ChangePoint, ExperimentContext, identification_pct, tradeoff_curve
from services.matrices import SensingMatrix, augment_with_offsets
from services.matrix_factory import resolve_fiducial
from services.observation_model import snr_to_sigma_x
from services.sic_povm import sic_capacity, sic_codes_for_offsets
from utils.serialization_utils import config_hash

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RandomAccessSampler:
    """
    K of the P users enter, user i with an offset delta_i uniform in {0..Delta}; it occupies
    column i(Delta+1) + delta_i of the augmented matrix.
    """
    P: int
    Delta: int
    K: int
    sigma_x_sq: float
    noise_variance: float
    M: int

    def __call__(self, rng: np.random.Generator, change_point: ChangePoint) -> Scenario:
        users = rng.choice(self.P, size=self.K, replace=False)
        offsets = rng.integers(0, self.Delta + 1, size=self.K)
        support = sorted(int(u) * (self.Delta + 1) + int(d) for u, d in zip(users, offsets))
        return Scenario(
            M=self.M,
            N=self.P * (self.Delta + 1),
            K=self.K,
            support=support,
            signal_variances=[self.sigma_x_sq] * self.K,
            noise_variance=self.noise_variance,
            change_point=change_point,
        )


def build_codes(config: RandomAccessConfig) -> Tuple[List[np.ndarray], int, MatrixKind]:
    """The first P offset-safe codes of the configured family, with the family capacity."""
    if config.family == CodeFamily.SIC_POVM:
        capacity = sic_capacity(config.d, config.Delta)
        if config.P > capacity:
            raise InvalidInputError(f"{config.P} users exceed SIC-POVM capacity {capacity} (d={config.d}, Delta={config.Delta})")
        fiducial = resolve_fiducial(config.d, config.fiducial_path, config.seed)
        return sic_codes_for_offsets(fiducial, config.Delta)[:config.P], capacity, MatrixKind.SIC_AUGMENTED

    capacity = gold_capacity(config.n, config.Delta)
    if config.P > capacity:
        raise InvalidInputError(f"{config.P} users exceed Gold capacity {capacity} (n={config.n}, Delta={config.Delta})")
    return gold_codes_for_offsets(gold_family(config.n), config.Delta, config.P), capacity, MatrixKind.GOLD_AUGMENTED


def build_augmented_matrix(config: RandomAccessConfig) -> Tuple[SensingMatrix, int]:
    codes, capacity, kind = build_codes(config)
    A = augment_with_offsets(codes, config.Delta, kind)
    logger.info(f"Augmented {config.family.value} matrix {A.M}x{A.N} for P={config.P}, Delta={config.Delta}: "
                f"alpha={A.coherence:.4f}, capacity {capacity}")
    return A, capacity


def random_access_context(config: RandomAccessConfig, matrix: SensingMatrix) -> ExperimentContext:
    if config.K > config.P:
        raise InvalidInputError(f"K={config.K} entering users exceed P={config.P}")
    if matrix.N < matrix.M:
        raise InvalidInputError(f"Augmented matrix {matrix.M}x{matrix.N} is taller than wide; increase P")
    sigma_x_sq = snr_to_sigma_x(config.snr_db, matrix.M, config.K, config.noise_variance)
    sampler = RandomAccessSampler(P=config.P, Delta=config.Delta, K=config.K, sigma_x_sq=sigma_x_sq,
                                  noise_variance=config.noise_variance, M=matrix.M)
    return ExperimentContext(
        matrix=matrix,
        sampler=sampler,
        horizon=config.horizon,
        seed=config.seed,
        change_point=config.change_point,
        threads=config.threads,
        min_retained=config.min_retained,
    )


def random_access_experiment(config: RandomAccessConfig) -> RandomAccessResult:
    """
    Detection of entering users over the augmented matrix, plus identification: a user is
    identified when its column at the true offset is in the support estimate at the stopping time.
    """
    A, capacity = build_augmented_matrix(config)
    context = random_access_context(config, A)
    digest = config_hash(config.model_dump())
    arl_trials = config.arl_trials or config.trials

    curves, identification = [], []
    for spec in config.detectors:
        curves.append(tradeoff_curve(context, spec, config.thresholds, config.trials, arl_trials, digest))
        for tau in config.thresholds:
            pct, stderr, used = identification_pct(context, spec, tau, config.trials)
            identification.append(IdentificationPoint(detector=spec.name, threshold=tau, identification_pct=pct,
                                                      identification_stderr=stderr, trials=used))
    return RandomAccessResult(coherence=A.coherence, rows=A.M, columns=A.N, capacity=capacity,
                              curves=curves, identification=identification)
