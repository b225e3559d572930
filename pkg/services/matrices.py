# Standard Library Imports
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence

# Third-Party Imports
import numpy as np
from scipy import linalg
from scipy.stats import unitary_group

# Application-Specific Imports
from models.errors import InvalidInputError, NumericRankError, UnsupportedError
from models.schemas import MatrixKind, MatrixInfo

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-10
_COHERENCE_BLOCK = 1024


@dataclass(frozen=True)
class SensingMatrix:
    """M x N complex matrix with unit-norm columns and cached mutual coherence."""
    data: np.ndarray
    kind: MatrixKind
    coherence: float
    provenance: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_data(cls, data: np.ndarray, kind: MatrixKind, provenance: Dict[str, Any] = None,
                  normalize: bool = False) -> "SensingMatrix":
        data = np.array(data, dtype=np.complex128, copy=True)
        if data.ndim != 2:
            raise InvalidInputError("Sensing matrix must be two-dimensional")
        if normalize:
            data = normalize_columns(data)
        norms = np.linalg.norm(data, axis=0)
        if not np.allclose(norms, 1.0, rtol=0.0, atol=UNIT_NORM_TOL):
            raise InvalidInputError(f"Columns must have unit norm (max deviation {np.max(np.abs(norms - 1.0)):.2e})")
        data.setflags(write=False)
        alpha = coherence(data) if data.shape[1] >= 2 else 0.0
        return cls(data=data, kind=kind, coherence=alpha, provenance=dict(provenance or {}))

    @property
    def M(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]

    def columns(self, indices: Sequence[int]) -> np.ndarray:
        return self.data[:, list(indices)]

    def info(self) -> MatrixInfo:
        return MatrixInfo(kind=self.kind, M=self.M, N=self.N, coherence=self.coherence, provenance=self.provenance)


def as_array(A) -> np.ndarray:
    """The raw matrix behind a SensingMatrix, or A itself as an ndarray."""
    return A.data if isinstance(A, SensingMatrix) else np.asarray(A)


def normalize_columns(data: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(data, axis=0)
    if np.any(norms == 0):
        raise InvalidInputError("Cannot normalize a zero column")
    return data / norms[None, :]


def coherence(A) -> float:
    """
    Mutual coherence: max over k != l of |<a_k, a_l>| / (|a_k| |a_l|).
    Evaluated in column blocks so wide augmented matrices never form the full Gram matrix.
    """
    data = as_array(A)
    N = data.shape[1]
    if N < 2:
        raise InvalidInputError("Coherence needs at least two columns")
    unit = normalize_columns(data.astype(np.complex128))
    best = 0.0
    for start in range(0, N, _COHERENCE_BLOCK):
        stop = min(start + _COHERENCE_BLOCK, N)
        gram = np.abs(unit[:, start:stop].conj().T @ unit)
        rows = np.arange(stop - start)
        gram[rows, rows + start] = 0.0
        best = max(best, float(gram.max()))
    return min(best, 1.0)


def unitary_matrix(M: int, seed: int = 0) -> SensingMatrix:
    data = unitary_group.rvs(M, random_state=seed) if M > 1 else np.ones((1, 1), dtype=complex)
    return SensingMatrix.from_data(data, MatrixKind.UNITARY, {"M": M, "seed": seed}, normalize=True)


def random_matrix(kind: MatrixKind, M: int, N: int, rng: np.random.Generator) -> SensingMatrix:
    """Gaussian, Bernoulli and DFT-row sensing matrices, all column-normalized."""
    kind = MatrixKind(kind)
    if kind == MatrixKind.GAUSSIAN:
        data = (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) / np.sqrt(2.0)
        data = normalize_columns(data)
    elif kind == MatrixKind.BERNOULLI:
        data = rng.choice([-1.0, 1.0], size=(M, N)) / np.sqrt(M)
    elif kind == MatrixKind.DFT_ROWS:
        if M > N:
            raise InvalidInputError(f"dft_rows needs M <= N (got M={M}, N={N})")
        rows = np.sort(rng.choice(N, size=M, replace=False))
        data = np.exp(-2j * np.pi * np.outer(rows, np.arange(N)) / N) / np.sqrt(M)
    else:
        raise InvalidInputError(f"{kind.value} is not a random matrix kind")
    logger.info(f"Built {kind.value} sensing matrix {M}x{N}")
    return SensingMatrix.from_data(data, kind, {"M": M, "N": N}, normalize=True)


def augment_with_offsets(codes: Sequence[np.ndarray], Delta: int,
                         kind: MatrixKind = MatrixKind.CUSTOM) -> SensingMatrix:
    """
    (M+Delta) x P(Delta+1) matrix whose columns are [0_delta; a_i; 0_(Delta-delta)]
    for every code i and offset delta, in (i, delta) lexicographic order.
    """
    if Delta < 0:
        raise InvalidInputError("Delta must be non-negative")
    codes = np.asarray([np.asarray(c, dtype=np.complex128) for c in codes])
    P, M = codes.shape
    data = np.zeros((M + Delta, P * (Delta + 1)), dtype=np.complex128)
    for delta in range(Delta + 1):
        data[delta:delta + M, delta::Delta + 1] = codes.T
    return SensingMatrix.from_data(data, kind, {"P": P, "Delta": Delta, "code_length": M}, normalize=True)


def orthogonal_complement_projection(B_Q: np.ndarray, M: int = None) -> np.ndarray:
    """
    P = I - B_Q (B_Q* B_Q)^{-1} B_Q*, the projector onto the orthogonal complement of the
    active users' code span. An empty B_Q (Q = 0) needs M and yields the identity.
    """
    B_Q = np.asarray(B_Q, dtype=np.complex128)
    if B_Q.ndim == 1:
        B_Q = B_Q[:, None]
    if B_Q.size == 0:
        size = B_Q.shape[0] if M is None else M
        return np.eye(size, dtype=np.complex128)
    Q, R = linalg.qr(B_Q, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise NumericRankError("Active-user code matrix is rank deficient")
    return np.eye(B_Q.shape[0], dtype=np.complex128) - Q @ Q.conj().T


def row_orthonormal_scale(A: SensingMatrix, tol: float = 1e-8) -> float:
    """
    Constant c with A A* = c I, or UnsupportedError when A A* is not a multiple of
    the identity. A / sqrt(c) then has orthonormal rows.
    """
    gram = A.data @ A.data.conj().T
    c = float(np.real(np.trace(gram))) / A.M
    if c <= 0 or np.max(np.abs(gram - c * np.eye(A.M))) > tol * max(c, 1.0):
        raise UnsupportedError(f"{A.kind.value} matrix does not satisfy A A* = cI; PSE needs orthonormal rows")
    return c
