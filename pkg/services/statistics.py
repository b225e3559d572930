# Standard Library Imports
import math
import logging
from dataclasses import dataclass
from typing import Sequence, Union

# Third-Party Imports
import numpy as np
from scipy import linalg
from scipy.stats import norm

# Application-Specific Imports
from models.errors import InvalidInputError, NotPositiveDefiniteError, NumericRankError
from models.schemas import VarianceBounds
from services.matrices import as_array

logger = logging.getLogger(__name__)

SignalPower = Union[float, VarianceBounds]

_TINY = np.finfo(float).tiny


def worst_case_variance(sigma: SignalPower) -> float:
    """sigma_min^2 when only bounds are known (lowest KL from the pre-change pdf)."""
    return sigma.sigma_min_sq if isinstance(sigma, VarianceBounds) else float(sigma)


def correlate(A, y: np.ndarray) -> np.ndarray:
    """g = A* y. Accepts one observation (M,) or a block of rows (T, M)."""
    data = as_array(A)
    return np.asarray(y) @ data.conj()


# Exact Gaussian vector models
class GaussianVecModel:
    """CN(0, C) over C^M with the Cholesky factor and log-determinant cached."""

    def __init__(self, covariance: np.ndarray):
        C = np.array(covariance, dtype=np.complex128)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise InvalidInputError("Covariance must be square")
        if not np.allclose(C, C.conj().T, atol=1e-10 * max(1.0, float(np.abs(C).max()))):
            raise NotPositiveDefiniteError("Covariance is not Hermitian")
        try:
            self._chol = linalg.cholesky(C, lower=True)
        except linalg.LinAlgError as e:
            raise NotPositiveDefiniteError(f"Covariance is not positive definite: {e}") from e
        self.covariance = C
        self.logdet = 2.0 * float(np.sum(np.log(np.real(np.diag(self._chol)))))

    @property
    def M(self) -> int:
        return self.covariance.shape[0]

    def quad_form(self, y: np.ndarray) -> Union[float, np.ndarray]:
        """y* C^-1 y for a single vector, or one value per row of a block."""
        y = np.asarray(y)
        Z = linalg.solve_triangular(self._chol, np.atleast_2d(y).T, lower=True)
        q = np.sum(np.abs(Z) ** 2, axis=0)
        return float(q[0]) if y.ndim == 1 else q

    def logpdf(self, y: np.ndarray):
        return -self.M * math.log(math.pi) - self.logdet - self.quad_form(y)

    def solve(self, B: np.ndarray) -> np.ndarray:
        return linalg.cho_solve((self._chol, True), B)


def pre_change_model(M: int, sigma_n_sq: float) -> GaussianVecModel:
    return GaussianVecModel(sigma_n_sq * np.eye(M))


def post_change_model(A, support: Sequence[int], variances: Sequence[float], sigma_n_sq: float) -> GaussianVecModel:
    """CN(0, sigma_n^2 I + A_S C_x A_S*) with C_x = diag(variances)."""
    data = as_array(A)
    A_S = data[:, list(support)]
    C = sigma_n_sq * np.eye(data.shape[0]) + (A_S * np.asarray(variances, dtype=float)[None, :]) @ A_S.conj().T
    return GaussianVecModel(0.5 * (C + C.conj().T))


def llr_gaussian_vec(y: np.ndarray, model0: GaussianVecModel, model1: GaussianVecModel):
    """log f1(y) - log f0(y) = y*(C0^-1 - C1^-1)y + log det C0 - log det C1."""
    if model0.M != model1.M:
        raise InvalidInputError("Models have different dimensions")
    return model0.quad_form(y) - model1.quad_form(y) + model0.logdet - model1.logdet


def kl_gaussian_vec(model1: GaussianVecModel, model0: GaussianVecModel) -> float:
    """KL(f1 || f0) = tr(C0^-1 C1) - M + log det C0 - log det C1."""
    trace = float(np.real(np.trace(model0.solve(model1.covariance))))
    return trace - model1.M + model0.logdet - model1.logdet


# Aggregate
@dataclass(frozen=True)
class AggregateEntryModel:
    var0: float
    var1_in: float
    var1_out: float

    def llr(self, g: np.ndarray) -> np.ndarray:
        """Per-entry log f1/f0 of g_i under CN(0, var1_in) against CN(0, var0)."""
        return math.log(self.var0 / self.var1_in) + np.abs(g) ** 2 * (1.0 / self.var0 - 1.0 / self.var1_in)


def aggregate_model(alpha: float, K: int, sigma: SignalPower, sigma_n_sq: float) -> AggregateEntryModel:
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"Coherence must lie in [0, 1] (got {alpha})")
    sigma_sq = worst_case_variance(sigma)
    var1_out = sigma_n_sq + K * alpha ** 2 * sigma_sq
    return AggregateEntryModel(
        var0=sigma_n_sq,
        var1_in=var1_out + (1.0 - alpha ** 2) * sigma_sq,
        var1_out=var1_out,
    )


# Energy
def gaussian_llr(x, mu0: float, var0: float, mu1: float, var1: float):
    return norm.logpdf(x, mu1, math.sqrt(var1)) - norm.logpdf(x, mu0, math.sqrt(var0))


@dataclass(frozen=True)
class EnergyModel:
    mu0: float
    var0: float
    mu1: float
    var1: float
    phi_min: float

    def llr(self, e):
        return gaussian_llr(e, self.mu0, self.var0, self.mu1, self.var1)


def energy_statistic(y: np.ndarray):
    """e[t] = ||y[t]||^2, per row for a block."""
    return np.sum(np.abs(y) ** 2, axis=-1)


def energy_model(alpha: float, K: int, sigma: SignalPower, sigma_n_sq: float, M: int) -> EnergyModel:
    """
    Gaussian approximations of e[t] before and after the change. phi_min is the Gershgorin
    lower bound on the eigenvalues of A_S C_x A_S*; with a known common variance the
    post-change mean is exact (trace identity).
    """
    sigma_sq = worst_case_variance(sigma)
    phi_min = max(0.0, sigma_sq * (1.0 - alpha * (K - 1)))
    if isinstance(sigma, VarianceBounds):
        mu1 = K * phi_min + M * sigma_n_sq
    else:
        mu1 = K * sigma_sq + M * sigma_n_sq
    var1 = K * phi_min ** 2 + 2.0 * sigma_n_sq * K * phi_min + M * sigma_n_sq ** 2
    return EnergyModel(mu0=M * sigma_n_sq, var0=M * sigma_n_sq ** 2, mu1=mu1, var1=var1, phi_min=phi_min)


def gershgorin_bounds(signal_variances: Sequence[float], alpha: float) -> np.ndarray:
    """K x 2 array of [sigma_i^2 -/+ alpha * sum_(l != i) sqrt(sigma_i^2 sigma_l^2)]."""
    v = np.asarray(signal_variances, dtype=float)
    if np.any(v <= 0):
        raise InvalidInputError("Signal variances must be positive")
    s = np.sqrt(v)
    radius = alpha * s * (s.sum() - s)
    return np.column_stack([v - radius, v + radius])


def signal_eigenvalues(A, support: Sequence[int], variances: Sequence[float]) -> np.ndarray:
    """The K (possibly) nonzero eigenvalues of A_S C_x A_S*, ascending."""
    data = as_array(A)
    root = np.sqrt(np.asarray(variances, dtype=float))
    A_S = data[:, list(support)]
    inner = root[:, None] * (A_S.conj().T @ A_S) * root[None, :]
    return np.clip(linalg.eigvalsh(inner), 0.0, None)


def energy_moments(eigenvalues: Sequence[float], sigma_n_sq: float, M: int):
    """Exact (mean, variance) of e[t] after the change given the signal eigenvalues."""
    phi = np.asarray(eigenvalues, dtype=float)
    mean = float(phi.sum()) + M * sigma_n_sq
    variance = float(np.sum(phi ** 2)) + 2.0 * sigma_n_sq * float(phi.sum()) + M * sigma_n_sq ** 2
    return mean, variance


# Correlator
def log1mexp(x):
    """log(1 - exp(-x)) for x > 0, stable at both ends."""
    x = np.asarray(x, dtype=float)
    small = x < math.log(2.0)
    safe_small = np.where(small, x, 1.0)
    safe_large = np.where(small, 1.0, x)
    return np.where(small, np.log(-np.expm1(-safe_small)), np.log1p(-np.exp(-safe_large)))


def correlator_statistic(g: np.ndarray):
    """c[t] = max_i |g_i[t]|^2, per row for a block."""
    return np.max(np.abs(g) ** 2, axis=-1)


@dataclass(frozen=True)
class CorrelatorModel:
    lambda_n: float
    lambda_0: float
    lambda_S: float
    N: int
    K: int

    def log_f0(self, c):
        c = np.maximum(np.asarray(c, dtype=float), _TINY)
        lam = self.lambda_n
        return math.log(self.N) + (self.N - 1) * log1mexp(lam * c) + math.log(lam) - lam * c

    def log_f1(self, c):
        """
        Density of the max of K exponentials with rate lambda_S and N-K with rate lambda_0,
        entries taken independent.
        """
        c = np.maximum(np.asarray(c, dtype=float), _TINY)
        l0, lS, N, K = self.lambda_0, self.lambda_S, self.N, self.K
        cdf_S = log1mexp(lS * c)
        cdf_0 = log1mexp(l0 * c)
        in_support = math.log(K) + math.log(lS) - lS * c + (K - 1) * cdf_S + (N - K) * cdf_0
        if N == K:
            return in_support
        out_support = math.log(N - K) + math.log(l0) - l0 * c + (N - K - 1) * cdf_0 + K * cdf_S
        return np.logaddexp(in_support, out_support)

    def cdf0(self, c):
        c = np.maximum(np.asarray(c, dtype=float), _TINY)
        return np.exp(self.N * log1mexp(self.lambda_n * c))

    def cdf1(self, c):
        c = np.maximum(np.asarray(c, dtype=float), _TINY)
        return np.exp(self.K * log1mexp(self.lambda_S * c) + (self.N - self.K) * log1mexp(self.lambda_0 * c))

    def llr(self, c):
        if np.any(np.asarray(c) < 0):
            raise InvalidInputError("Correlator statistic must be non-negative")
        return self.log_f1(c) - self.log_f0(c)


def correlator_model(alpha: float, K: int, N: int, sigma: SignalPower, sigma_n_sq: float) -> CorrelatorModel:
    if not 1 <= K <= N:
        raise InvalidInputError(f"Correlator model needs 1 <= K <= N (got K={K}, N={N})")
    sigma_sq = worst_case_variance(sigma)
    out_var = sigma_n_sq + K * alpha ** 2 * sigma_sq
    return CorrelatorModel(
        lambda_n=1.0 / sigma_n_sq,
        lambda_0=1.0 / out_var,
        lambda_S=1.0 / (out_var + (1.0 - alpha ** 2) * sigma_sq),
        N=N,
        K=K,
    )


# PSE
@dataclass(frozen=True)
class PseModel:
    K_p: int
    noncentrality: float

    def llr(self, p):
        K_p, mu = self.K_p, self.noncentrality
        return gaussian_llr(p, K_p, 2.0 * K_p, K_p + mu, 2.0 * (K_p + 2.0 * mu))


def pse_model(M: int, N: int, K: int, K_p: int, expected_signal_energy: float, sigma_n_sq: float) -> PseModel:
    """
    mu = (M K_p / (N K)) (1 + (K - K_p)/M) E||x||^2 / sigma_n^2, valid for row-orthonormal A.
    """
    if not 1 <= K_p <= K:
        raise InvalidInputError(f"K_p must lie in [1, K={K}] (got {K_p})")
    mu = (M * K_p / (N * K)) * (1.0 + (K - K_p) / M) * expected_signal_energy / sigma_n_sq
    return PseModel(K_p=K_p, noncentrality=mu)


def pse_statistic(A, y: np.ndarray, partial_support: Sequence[int], sigma_n_sq: float = 1.0) -> float:
    """||P y||^2 / sigma_n^2 with P the orthogonal projector onto span(A_Sp)."""
    if len(partial_support) == 0:
        raise InvalidInputError("Partial support must be non-empty")
    data = as_array(A)
    Q, R = linalg.qr(data[:, list(partial_support)], mode="economic")
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise NumericRankError(f"Columns {list(partial_support)} are linearly dependent")
    return float(np.sum(np.abs(Q.conj().T @ y) ** 2)) / sigma_n_sq
