# Standard Library Imports
import math
import logging
from itertools import combinations
from typing import Callable, List, Optional, Sequence, Tuple

# Third-Party Imports
import numpy as np

# Application-Specific Imports
from models.errors import CapacityError, InvalidInputError
from models.schemas import DetectorVariant
from services.matrices import as_array
from services.recovery import omp
from services.statistics import (
    AggregateEntryModel,
    CorrelatorModel,
    EnergyModel,
    GaussianVecModel,
    PseModel,
    correlate,
    correlator_statistic,
    energy_statistic,
    llr_gaussian_vec,
    pse_statistic,
)

logger = logging.getLogger(__name__)

RecoveryFn = Callable[[np.ndarray, np.ndarray, int], Sequence[int]]


def cusum_step(W: float, llr: float) -> float:
    return max(W + llr, 0.0)


def cusum_path(W0: np.ndarray, L: np.ndarray) -> np.ndarray:
    """
    Every intermediate state of W <- max(W + l, 0) over the rows of L, for all tracks at once:
    W[t] = S[t] - min(-W0, S[1], ..., S[t]) with S the running sum of the llrs.
    """
    S = np.cumsum(L, axis=0)
    floor = np.minimum(np.minimum.accumulate(S, axis=0), -W0[None, :])
    return S - floor


class CusumState:
    """W per track (always >= 0) and the number of observations consumed."""

    def __init__(self, n_tracks: int):
        self.W = np.zeros(n_tracks)
        self.t = 0

    def reset(self) -> None:
        self.W[:] = 0.0
        self.t = 0


class CusumDetector:
    """
    Base stopping rule. Subclasses supply per-step llrs for every track (llr_block) and
    the scalar metric compared against the threshold (metric_path); firing is the first
    t with metric > threshold, checked after the update at t.
    """

    variant: DetectorVariant = None
    block_size: int = 1024

    def __init__(self, threshold: float, n_tracks: int = 1, name: Optional[str] = None):
        if not threshold > 0:
            raise InvalidInputError(f"Threshold must be positive (got {threshold})")
        self.threshold = float(threshold)
        self.state = CusumState(n_tracks)
        self.name = name or self.variant.value
        self.stopping_time: Optional[int] = None
        self.record_trace = False
        self.trace: List[float] = []

    # hooks
    def llr_block(self, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def metric_path(self, W_path: np.ndarray) -> np.ndarray:
        return W_path.max(axis=1)

    def _commit(self, last: int) -> None:
        """Apply per-step side state (estimates, parameters) up to row `last` of the block."""

    # engine
    def path(self, Y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        W_path = cusum_path(self.state.W, np.asarray(self.llr_block(Y), dtype=float).reshape(len(Y), -1))
        return W_path, self.metric_path(W_path)

    def advance(self, W_path: np.ndarray, metric: np.ndarray, stop: Optional[int]) -> None:
        last = stop if stop is not None else len(W_path) - 1
        self.state.W = W_path[last].copy()
        self._commit(last)
        if self.record_trace:
            self.trace.extend(float(m) for m in metric[:last + 1])
        if stop is not None:
            self.stopping_time = self.state.t + stop
        self.state.t += last + 1

    def process_block(self, Y: np.ndarray) -> Optional[int]:
        """Consume rows of Y in order; returns the global stopping time if the rule fired."""
        if self.stopping_time is not None:
            return self.stopping_time
        W_path, metric = self.path(Y)
        hits = np.flatnonzero(metric > self.threshold)
        self.advance(W_path, metric, int(hits[0]) if hits.size else None)
        return self.stopping_time

    def step(self, y: np.ndarray) -> bool:
        return self.process_block(np.asarray(y)[None, :]) is not None

    @property
    def metric(self) -> float:
        return float(self.metric_path(self.state.W[None, :])[0])

    @property
    def fired(self) -> bool:
        return self.stopping_time is not None

    def support_estimate(self) -> Optional[List[int]]:
        return None

    def reset(self) -> None:
        self.state.reset()
        self.stopping_time = None
        self.trace = []

    def describe(self) -> dict:
        return {"variant": self.variant.value, "name": self.name, "threshold": self.threshold}


class IdealCusum(CusumDetector):
    """Exact Gaussian llr with known support and covariance."""

    variant = DetectorVariant.IDEAL

    def __init__(self, threshold: float, model0: GaussianVecModel, model1: GaussianVecModel, name: Optional[str] = None):
        super().__init__(threshold, 1, name)
        self.model0 = model0
        self.model1 = model1

    def llr_block(self, Y):
        return np.atleast_1d(llr_gaussian_vec(Y, self.model0, self.model1))[:, None]


class OptimalCusum(CusumDetector):
    """
    One CUSUM track per candidate support of size K (lexicographic order), each with the
    exact Gaussian llr in Woodbury form:
        L_S(y) = g_S* H g_S / sigma_n^2 - log det(I + (sigma_x^2/sigma_n^2) G_S),
        H = (sigma_n^2/sigma_x^2 I + G_S)^-1, G_S = A_S* A_S, g = A* y.
    """

    variant = DetectorVariant.OPTIMAL

    def __init__(self, threshold: float, A, K: int, sigma_x_sq: float, sigma_n_sq: float,
                 subset_cap: int = 10_000, name: Optional[str] = None):
        data = as_array(A)
        N = data.shape[1]
        count = math.comb(N, K)
        if count > subset_cap:
            raise CapacityError(
                f"Optimal CUSUM needs {count} candidate supports (cap {subset_cap}); use the aggregate detector instead"
            )
        super().__init__(threshold, count, name)
        self.A = data
        self.sigma_n_sq = sigma_n_sq
        self.candidates = np.array(list(combinations(range(N), K)), dtype=int).reshape(count, K)
        G = data.conj().T @ data
        grams = G[self.candidates[:, :, None], self.candidates[:, None, :]]
        eye = np.eye(K)
        self.H = np.linalg.inv(sigma_n_sq / sigma_x_sq * eye[None] + grams)
        _, logdets = np.linalg.slogdet(eye[None] + (sigma_x_sq / sigma_n_sq) * grams)
        self.offsets = -np.real(logdets)
        self.block_size = max(1, min(1024, 2_000_000 // max(count * K, 1)))
        self._best: Optional[int] = None

    def llr_block(self, Y):
        g = correlate(self.A, Y)
        g_S = g[:, self.candidates]
        quad = np.real(np.einsum("tck,ckl,tcl->tc", g_S.conj(), self.H, g_S))
        return quad / self.sigma_n_sq + self.offsets[None, :]

    def _commit(self, last):
        self._best = int(np.argmax(self.state.W))

    def support_estimate(self):
        if self._best is None:
            return None
        return [int(i) for i in self.candidates[self._best]]


def top_k_sum(W_path: np.ndarray, K: int) -> np.ndarray:
    N = W_path.shape[1]
    if K >= N:
        return W_path.sum(axis=1)
    return np.partition(W_path, N - K, axis=1)[:, N - K:].sum(axis=1)


def top_k_indices(W: np.ndarray, K: int) -> List[int]:
    """Indices of the K largest tracks, index ties broken ascending, returned sorted."""
    order = np.argsort(-W, kind="stable")
    return sorted(int(i) for i in order[:K])


class AggregateCusum(CusumDetector):
    """One track per entry of g = A* y; the metric is the sum of the K largest tracks."""

    variant = DetectorVariant.AGGREGATE

    def __init__(self, threshold: float, A, K: int, model: AggregateEntryModel, name: Optional[str] = None):
        data = as_array(A)
        if K > data.shape[1]:
            raise InvalidInputError(f"K={K} exceeds N={data.shape[1]}")
        super().__init__(threshold, data.shape[1], name)
        self.A = data
        self.K = K
        self.model = model

    def llr_block(self, Y):
        return self.model.llr(correlate(self.A, Y))

    def metric_path(self, W_path):
        return top_k_sum(W_path, self.K)

    def support_estimate(self):
        return top_k_indices(self.state.W, self.K) if self.state.t else None


class EnergyCusum(CusumDetector):
    variant = DetectorVariant.ENERGY

    def __init__(self, threshold: float, model: EnergyModel, name: Optional[str] = None):
        super().__init__(threshold, 1, name)
        self.model = model

    def llr_block(self, Y):
        return self.model.llr(energy_statistic(Y))[:, None]


class CorrelatorCusum(CusumDetector):
    variant = DetectorVariant.CORRELATOR

    def __init__(self, threshold: float, A, model: CorrelatorModel, name: Optional[str] = None):
        super().__init__(threshold, 1, name)
        self.A = as_array(A)
        self.model = model

    def llr_block(self, Y):
        return self.model.llr(correlator_statistic(correlate(self.A, Y)))[:, None]


class PseCusum(CusumDetector):
    """
    Per step: partial support of size K_p from the recovery routine (OMP by default),
    then the projection energy onto that subspace, scored with Gaussian approximations.
    """

    variant = DetectorVariant.PSE
    block_size = 256

    def __init__(self, threshold: float, A, K_p: int, model: PseModel, sigma_n_sq: float,
                 recovery_fn: Optional[RecoveryFn] = None, name: Optional[str] = None):
        super().__init__(threshold, 1, name)
        self.A = as_array(A)
        self.K_p = K_p
        self.model = model
        self.sigma_n_sq = sigma_n_sq
        self.recovery_fn = recovery_fn or (lambda A, y, k: omp(A, y, k).indices)
        self._pending: List[List[int]] = []
        self._support: Optional[List[int]] = None

    def llr_block(self, Y):
        self._pending = [list(self.recovery_fn(self.A, y, self.K_p)) for y in Y]
        p = np.array([pse_statistic(self.A, y, s, self.sigma_n_sq) for y, s in zip(Y, self._pending)])
        return self.model.llr(p)[:, None]

    def _commit(self, last):
        self._support = sorted(int(i) for i in self._pending[last])

    def support_estimate(self):
        return self._support


class ParallelKCusum(CusumDetector):
    """One detector per sparsity hypothesis k = 1..K_max; fires when any of them exceeds the threshold."""

    def __init__(self, threshold: float, detectors: Sequence[CusumDetector], name: Optional[str] = None):
        if not detectors:
            raise InvalidInputError("ParallelK needs at least one sub-detector")
        self.detectors = list(detectors)
        self.variant = self.detectors[0].variant
        super().__init__(threshold, len(self.detectors), name or f"{self.variant.value}_kmax{len(self.detectors)}")
        for d in self.detectors:
            d.threshold = self.threshold
        self.block_size = min(d.block_size for d in self.detectors)
        self._paths: List[np.ndarray] = []
        self._best: Optional[int] = None

    def path(self, Y):
        results = [d.path(Y) for d in self.detectors]
        self._paths = results
        metrics = np.column_stack([m for _, m in results])
        return metrics, metrics.max(axis=1)

    def advance(self, W_path, metric, stop):
        for d, (path, m) in zip(self.detectors, self._paths):
            d.advance(path, m, stop)
        super().advance(W_path, metric, stop)
        self._best = int(np.argmax(self.state.W))

    def metric_path(self, W_path):
        return W_path.max(axis=1)

    def support_estimate(self):
        if self._best is None:
            return None
        return self.detectors[self._best].support_estimate()

    @property
    def best_k(self) -> Optional[int]:
        return None if self._best is None else self._best + 1

    def reset(self):
        super().reset()
        for d in self.detectors:
            d.reset()
        self._best = None

    def describe(self):
        return {**super().describe(), "K_max": len(self.detectors)}
