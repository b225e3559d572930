# Standard Library Imports
import logging
from typing import Callable, Optional, Union

# Third-Party Imports
import numpy as np

# Application-Specific Imports
from models.errors import InvalidInputError, UnsupportedError
from models.schemas import DetectorVariant
from services.matrices import as_array
from services.detectors import CusumDetector, top_k_indices, top_k_sum
from services.statistics import (
    CorrelatorModel,
    correlate,
    correlator_statistic,
    energy_statistic,
    gaussian_llr,
)

logger = logging.getLogger(__name__)

Theta = Union[float, np.ndarray]


def sgd_update(theta_hat: Theta, llr_fn: Callable[[Theta], Theta], a: float, c: float) -> Theta:
    """
    theta <- theta + a (L(theta + c) - L(theta - c)) / c, with theta - c floored at 0,
    and the result clamped to >= 0 (variance-like parameter).
    """
    upper = llr_fn(theta_hat + c)
    lower = llr_fn(np.maximum(theta_hat - c, 0.0))
    return np.maximum(theta_hat + a * (upper - lower) / c, 0.0)


class SgdCusum(CusumDetector):
    """
    CUSUM whose post-change pdf parameter theta is tracked online. The llr of d[t] is taken
    at theta[t], which only depends on d[0..t-1]; d[t] then moves theta to theta[t+1].
    theta starts at theta0 (0 by default).
    """

    block_size = 256

    def __init__(self, threshold: float, n_tracks: int, a: float, c: float, theta0: Theta = 0.0,
                 name: Optional[str] = None):
        if a < 0 or c <= 0:
            raise InvalidInputError(f"SGD needs a >= 0 and c > 0 (got a={a}, c={c})")
        super().__init__(threshold, n_tracks, name)
        self.a = a
        self.c = c
        self.theta0 = theta0
        self.theta_hat = np.array(theta0, dtype=float) if np.ndim(theta0) else float(theta0)
        self._pending_theta = []

    def statistic_block(self, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def llr_at(self, theta: Theta, d) -> Theta:
        raise NotImplementedError

    def llr_block(self, Y):
        stats = self.statistic_block(Y)
        theta = self.theta_hat
        thetas, rows = [], []
        for d in stats:
            rows.append(self.llr_at(theta, d))
            theta = sgd_update(theta, lambda th: self.llr_at(th, d), self.a, self.c)
            thetas.append(theta)
        self._pending_theta = thetas
        return np.array(rows, dtype=float).reshape(len(stats), -1)

    def _commit(self, last):
        self.theta_hat = self._pending_theta[last]

    def reset(self):
        super().reset()
        self.theta_hat = np.array(self.theta0, dtype=float) if np.ndim(self.theta0) else float(self.theta0)

    def describe(self):
        return {**super().describe(), "a": self.a, "c": self.c}


class SgdAggregateCusum(SgdCusum):
    """Per-entry theta_i in f1 = CN(0, sigma_n^2 + theta_i); metric is the sum of the K largest tracks."""

    variant = DetectorVariant.SGD_AGGREGATE

    def __init__(self, threshold: float, A, K: int, sigma_n_sq: float, a: float = 0.01, c: float = 0.05,
                 theta0: Theta = 0.0, name: Optional[str] = None):
        data = as_array(A)
        N = data.shape[1]
        super().__init__(threshold, N, a, c, np.broadcast_to(np.asarray(theta0, dtype=float), (N,)).copy(), name)
        self.A = data
        self.K = K
        self.sigma_n_sq = sigma_n_sq

    def statistic_block(self, Y):
        return np.abs(correlate(self.A, Y)) ** 2

    def llr_at(self, theta, g_sq):
        v0 = self.sigma_n_sq
        v1 = v0 + theta
        return np.log(v0 / v1) + g_sq * (1.0 / v0 - 1.0 / v1)

    def metric_path(self, W_path):
        return top_k_sum(W_path, self.K)

    def support_estimate(self):
        return top_k_indices(self.state.W, self.K) if self.state.t else None


class SgdEnergyCusum(SgdCusum):
    """
    Known K: theta = phi_min, mean K theta + M sigma_n^2, variance K theta^2 + 2 sigma_n^2 K theta + M sigma_n^4.
    Unknown K: theta = K phi_min, mean theta + M sigma_n^2, variance sigma_min^2 theta + 2 sigma_n^2 theta + M sigma_n^4.
    """

    variant = DetectorVariant.SGD_ENERGY

    def __init__(self, threshold: float, M: int, sigma_n_sq: float, K: Optional[int] = None,
                 sigma_min_sq: Optional[float] = None, a: float = 0.01, c: float = 0.05, theta0: float = 0.0,
                 name: Optional[str] = None):
        if K is None and sigma_min_sq is None:
            raise InvalidInputError("Energy-SGD with unknown K needs sigma_min^2")
        super().__init__(threshold, 1, a, c, theta0, name)
        self.M = M
        self.K = K
        self.sigma_n_sq = sigma_n_sq
        self.sigma_min_sq = sigma_min_sq

    def statistic_block(self, Y):
        return energy_statistic(Y)

    def moments(self, theta):
        sn2, M = self.sigma_n_sq, self.M
        if self.K is not None:
            K = self.K
            return K * theta + M * sn2, K * theta ** 2 + 2.0 * sn2 * K * theta + M * sn2 ** 2
        return theta + M * sn2, self.sigma_min_sq * theta + 2.0 * sn2 * theta + M * sn2 ** 2

    def llr_at(self, theta, e):
        mu1, var1 = self.moments(theta)
        return gaussian_llr(e, self.M * self.sigma_n_sq, self.M * self.sigma_n_sq ** 2, mu1, var1)


class SgdCorrelatorCusum(SgdCusum):
    """theta replaces sigma_i^2 in lambda_S = 1/(sigma_n^2 + K alpha^2 sigma_min^2 + (1 - alpha^2) theta)."""

    variant = DetectorVariant.SGD_CORRELATOR

    def __init__(self, threshold: float, A, K: Optional[int], alpha: float, sigma_min_sq: float,
                 sigma_n_sq: float, a: float = 0.01, c: float = 0.05, theta0: float = 0.0,
                 name: Optional[str] = None):
        if K is None:
            raise UnsupportedError("Correlator-SGD cannot run with unknown sparsity")
        super().__init__(threshold, 1, a, c, theta0, name)
        self.A = as_array(A)
        self.K = K
        self.alpha = alpha
        self.sigma_n_sq = sigma_n_sq
        self.out_var = sigma_n_sq + K * alpha ** 2 * sigma_min_sq

    def model_at(self, theta: float) -> CorrelatorModel:
        return CorrelatorModel(
            lambda_n=1.0 / self.sigma_n_sq,
            lambda_0=1.0 / self.out_var,
            lambda_S=1.0 / (self.out_var + (1.0 - self.alpha ** 2) * float(theta)),
            N=self.A.shape[1],
            K=self.K,
        )

    def statistic_block(self, Y):
        return correlator_statistic(correlate(self.A, Y))

    def llr_at(self, theta, c):
        return float(self.model_at(theta).llr(c))
