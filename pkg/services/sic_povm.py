# Standard Library Imports
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

# Third-Party Imports
import numpy as np
from scipy.optimize import least_squares

# Application-Specific Imports
from models.errors import FiducialSearchError, InvalidInputError
from models.schemas import FiducialSource, MatrixKind
from services.matrices import SensingMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Fiducial:
    d: int
    vector: np.ndarray
    source: FiducialSource
    residual: float


def _tau(d: int) -> complex:
    return -np.exp(1j * np.pi / d)


def displace(vector: np.ndarray, a: int, b: int) -> np.ndarray:
    """D_(a,b) v = tau^(ab) X^a Z^b v, X the cyclic shift e_i -> e_(i+1), Z = diag(omega^i)."""
    d = vector.shape[0]
    omega = np.exp(2j * np.pi / d)
    z_applied = omega ** (b * np.arange(d)) * vector
    return _tau(d) ** (a * b) * np.roll(z_applied, a)


def weyl_heisenberg_orbit(vector: np.ndarray) -> np.ndarray:
    """d x d^2 matrix of D_(a,b) v in (a, b) lexicographic order."""
    d = vector.shape[0]
    return np.column_stack([displace(vector, a, b) for a in range(d) for b in range(d)])


@lru_cache(maxsize=32)
def _displacement_stack(d: int) -> np.ndarray:
    """All D_(a,b) except the identity, as a (d^2-1, d, d) array."""
    eye = np.eye(d, dtype=np.complex128)
    ops = []
    for a in range(d):
        for b in range(d):
            if a == 0 and b == 0:
                continue
            ops.append(np.column_stack([displace(eye[:, j], a, b) for j in range(d)]))
    return np.array(ops)


def orbit_residual(vector: np.ndarray) -> float:
    """
    max |  |<a_i, a_l>|^2 - 1/(d+1)  | over the orbit. Overlaps within a Weyl-Heisenberg
    orbit only depend on the displacement difference, so |<v, D_k v>| covers every pair.
    """
    d = vector.shape[0]
    psi = vector / np.linalg.norm(vector)
    overlaps = np.abs(np.einsum("i,kij,j->k", psi.conj(), _displacement_stack(d), psi)) ** 2
    return float(np.max(np.abs(overlaps - 1.0 / (d + 1))))


def _residuals_and_jacobian(d: int):
    ops = _displacement_stack(d)
    ops_h = np.conj(np.transpose(ops, (0, 2, 1)))
    target = 1.0 / (d + 1)

    def split(x):
        return x[:d] + 1j * x[d:]

    def fun(x):
        psi = split(x)
        norm_sq = float(np.vdot(psi, psi).real)
        z = np.einsum("i,kij,j->k", psi.conj(), ops, psi)
        return np.concatenate([np.abs(z) ** 2 - target * norm_sq ** 2, [norm_sq - 1.0]])

    def jac(x):
        psi = split(x)
        norm_sq = float(np.vdot(psi, psi).real)
        d_psi = ops @ psi
        dh_psi = ops_h @ psi
        z = np.einsum("i,ki->k", psi.conj(), d_psi)
        zc = z.conj()[:, None]
        du = 2.0 * np.real(zc * (d_psi + dh_psi.conj()))
        dv = 2.0 * np.real(zc * (-1j * d_psi + 1j * dh_psi.conj()))
        du -= target * 4.0 * norm_sq * x[:d][None, :]
        dv -= target * 4.0 * norm_sq * x[d:][None, :]
        norm_row = 2.0 * x[None, :]
        return np.vstack([np.hstack([du, dv]), norm_row])

    return fun, jac


def analytic_fiducial(d: int) -> Optional[Fiducial]:
    if d == 2:
        theta = np.arccos(1.0 / np.sqrt(3.0))
        vector = np.array([np.cos(theta / 2), np.exp(1j * np.pi / 4) * np.sin(theta / 2)])
    elif d == 3:
        vector = np.array([0.0, 1.0, -1.0], dtype=np.complex128) / np.sqrt(2.0)
    else:
        return None
    return Fiducial(d=d, vector=vector.astype(np.complex128), source=FiducialSource.ANALYTIC,
                    residual=orbit_residual(vector))


def find_fiducial(d: int, rng: np.random.Generator, tol: float = 1e-10, max_restarts: int = 50) -> Fiducial:
    """
    Randomized search for a vector whose Weyl-Heisenberg orbit is equiangular.

    Each restart runs Levenberg-Marquardt on the residuals |<v, D_k v>|^2 - |v|^4/(d+1)
    plus the unit-norm constraint from a random complex Gaussian start.
    """
    if d < 2:
        raise InvalidInputError("Fiducial search needs d >= 2")
    fun, jac = _residuals_and_jacobian(d)
    best_vector, best_residual = None, np.inf

    for attempt in range(max_restarts):
        start = rng.standard_normal(2 * d)
        start /= np.linalg.norm(start)
        result = least_squares(fun, start, jac=jac, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14,
                               max_nfev=2000 * d)
        psi = result.x[:d] + 1j * result.x[d:]
        psi = psi / np.linalg.norm(psi)
        residual = orbit_residual(psi)
        if residual < best_residual:
            best_vector, best_residual = psi, residual
        if residual <= tol:
            logger.info(f"Found SIC fiducial for d={d} after {attempt + 1} restart(s), residual {residual:.2e}")
            return Fiducial(d=d, vector=psi, source=FiducialSource.NUMERIC_SEARCH, residual=residual)
        logger.debug(f"Fiducial restart {attempt + 1} for d={d} stalled at residual {residual:.2e}")

    logger.error(f"Fiducial search failed for d={d}")
    raise FiducialSearchError(f"No SIC fiducial found for d={d} within {max_restarts} restarts", best_residual)


def fiducial_from_vector(vector: np.ndarray, source: FiducialSource = FiducialSource.FILE_IMPORT,
                         tol: float = 1e-6) -> Fiducial:
    vector = np.asarray(vector, dtype=np.complex128)
    vector = vector / np.linalg.norm(vector)
    residual = orbit_residual(vector)
    if residual > tol:
        raise InvalidInputError(f"Vector is not a SIC fiducial (residual {residual:.2e} > {tol:.1e})")
    return Fiducial(d=vector.shape[0], vector=vector, source=source, residual=residual)


def sic_povm(fiducial: Fiducial, N: Optional[int] = None) -> SensingMatrix:
    """First N columns, in (a, b) lexicographic order, of the orbit of the fiducial."""
    d = fiducial.d
    N = d * d if N is None else N
    if N > d * d:
        raise InvalidInputError(f"SIC-POVM in dimension {d} has only {d * d} vectors (requested {N})")
    orbit = weyl_heisenberg_orbit(fiducial.vector)[:, :N]
    return SensingMatrix.from_data(orbit, MatrixKind.SIC_POVM,
                                   {"d": d, "N": N, "fiducial_source": fiducial.source.value,
                                    "fiducial_residual": fiducial.residual}, normalize=True)


def offset_shift_indices(d: int, Delta: int) -> List[int]:
    if Delta + 1 > d:
        raise InvalidInputError(f"Delta+1={Delta + 1} exceeds the code length {d}")
    return [k * (Delta + 1) for k in range(d // (Delta + 1))]


def sic_codes_for_offsets(fiducial: Fiducial, Delta: int) -> List[np.ndarray]:
    """
    d * floor(d/(Delta+1)) SIC-POVM vectors, none a cyclic shift of another within Delta:
    shift indices a in {0, Delta+1, 2(Delta+1), ...}, all b.
    """
    d = fiducial.d
    return [displace(fiducial.vector, a, b) for a in offset_shift_indices(d, Delta) for b in range(d)]


def sic_capacity(d: int, Delta: int) -> int:
    return d * (d // (Delta + 1))


def orbit_gram_deviation(A: SensingMatrix) -> Tuple[float, float]:
    """(max, min) of |<a_i, a_l>|^2 over distinct column pairs, computed exhaustively."""
    gram = np.abs(A.data.conj().T @ A.data) ** 2
    off = gram[~np.eye(A.N, dtype=bool)]
    return float(off.max()), float(off.min())
