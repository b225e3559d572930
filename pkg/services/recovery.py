# Standard Library Imports
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Union

# Third-Party Imports
import numpy as np
from scipy import linalg

# Application-Specific Imports
from models.errors import InvalidInputError, NumericRankError
from services.matrices import as_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SupportEstimate:
    indices: List[int]
    residual_norm: float
    residual_history: List[float] = field(default_factory=list)


def omp(A, y: np.ndarray, k: int) -> SupportEstimate:
    """
    Orthogonal matching pursuit: k greedy picks of the column most correlated with the
    residual, each followed by a least-squares refit on the selected columns (via QR).
    Ties go to the lowest index.
    """
    data = as_array(A)
    M, N = data.shape
    if not 1 <= k <= min(M, N):
        raise InvalidInputError(f"OMP target size must lie in [1, {min(M, N)}] (got {k})")

    y = np.asarray(y, dtype=np.complex128)
    norms = np.linalg.norm(data, axis=0)
    residual = y
    selected: List[int] = []
    history: List[float] = []
    for _ in range(k):
        scores = np.abs(data.conj().T @ residual) / norms
        scores[selected] = -np.inf
        selected.append(int(np.argmax(scores)))

        Q, R = linalg.qr(data[:, selected], mode="economic")
        diag = np.abs(np.diag(R))
        if diag.min() <= 1e-10 * max(diag.max(), 1.0):
            raise NumericRankError(f"OMP selected linearly dependent columns {selected}")
        residual = y - Q @ (Q.conj().T @ y)
        history.append(float(np.linalg.norm(residual)))

    return SupportEstimate(indices=selected, residual_norm=history[-1], residual_history=history)


def support_recovery_pct(estimate: Union[SupportEstimate, Sequence[int]], truth: Sequence[int]) -> float:
    """Percentage of the true support found in the estimate."""
    if len(truth) == 0:
        raise InvalidInputError("True support is empty")
    found = estimate.indices if isinstance(estimate, SupportEstimate) else estimate
    return 100.0 * len(set(found) & set(truth)) / len(truth)
