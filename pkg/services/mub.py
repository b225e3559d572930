# Standard Library Imports
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

# Third-Party Imports
import galois
import numpy as np

# Application-Specific Imports
from models.errors import InvalidInputError, UnsupportedDimensionError
from models.schemas import MatrixKind
from services.matrices import SensingMatrix

logger = logging.getLogger(__name__)

AMUB_PRIME_SEARCH_LIMIT = 10_000_000


@dataclass(frozen=True)
class BasisSet:
    """d+1 orthonormal d x d bases (columns are basis vectors)."""
    d: int
    bases: List[np.ndarray]
    kind: MatrixKind
    max_cross_coherence: float
    params: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.bases)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.bases[k]


def prime_power(d: int) -> Optional[Tuple[int, int]]:
    """(p, n) with d = p^n, or None."""
    if d < 2:
        return None
    primes, exponents = galois.factors(d)
    return (int(primes[0]), int(exponents[0])) if len(primes) == 1 else None


def cross_coherence(bases: Sequence[np.ndarray]) -> float:
    best = 0.0
    for k in range(len(bases)):
        for q in range(k + 1, len(bases)):
            best = max(best, float(np.max(np.abs(bases[k].conj().T @ bases[q]))))
    return best


def _quadratic_phase_bases(p: int) -> List[np.ndarray]:
    omega = np.exp(2j * np.pi / p)
    l = np.arange(p)
    bases = []
    for a in range(p):
        # column b, row l: omega^(a l^2 + b l) / sqrt(p)
        exponents = (a * l[:, None] ** 2 + l[:, None] * l[None, :]) % p
        bases.append(omega ** exponents / np.sqrt(p))
    return bases


def _galois_bases(p: int, n: int) -> List[np.ndarray]:
    q = p ** n
    GF = galois.GF(q)
    x = GF.elements
    omega = np.exp(2j * np.pi / p)
    bases = []
    for a in range(q):
        A = GF(a)
        columns = []
        for b in range(q):
            phase = np.asarray((A * x ** 2 + GF(b) * x).field_trace(), dtype=int)
            columns.append(omega ** phase / np.sqrt(q))
        bases.append(np.column_stack(columns))
    return bases


def mub(d: int) -> BasisSet:
    """
    Standard basis plus d quadratic-phase bases. Odd primes use omega_d^(a l^2 + b l);
    odd prime powers p^n use the field trace over GF(p^n).
    """
    factor = prime_power(d)
    if factor is None or factor[0] == 2:
        raise UnsupportedDimensionError(f"MUBs are built for odd prime powers only (d={d})")
    p, n = factor
    phase_bases = _quadratic_phase_bases(p) if n == 1 else _galois_bases(p, n)
    bases = [np.eye(d, dtype=np.complex128)] + phase_bases
    alpha = cross_coherence(bases)
    logger.info(f"Built {d + 1} mutually unbiased bases for d={d}, cross coherence {alpha:.6f}")
    return BasisSet(d=d, bases=bases, kind=MatrixKind.MUB, max_cross_coherence=alpha, params={"p": p, "n": n})


def amub(d: int) -> BasisSet:
    """
    Approximately mutually unbiased bases for any d >= 2.

    With p = kd + 1 the smallest such prime and gamma = g^k of order d (g a primitive
    root mod p), basis a in {0..d-1} has entries e_p(a gamma^l) e_d(b l) / sqrt(d)
    (row l, column b). Each is a modulated DFT, hence exactly orthonormal; cross-basis
    overlaps are subgroup exponential sums of size at most sqrt(p)/d.
    """
    if d < 2:
        raise InvalidInputError("AMUB needs d >= 2")
    k = 1
    while not galois.is_prime(k * d + 1):
        k += 1
        if k * d + 1 > AMUB_PRIME_SEARCH_LIMIT:
            raise UnsupportedDimensionError(f"No prime p = kd+1 below {AMUB_PRIME_SEARCH_LIMIT} for d={d}")
    p = k * d + 1
    gamma = pow(int(galois.primitive_root(p)), k, p)
    l = np.arange(d)
    powers = np.array([pow(gamma, int(i), p) for i in l])
    dft = np.exp(2j * np.pi * np.outer(l, l) / d) / np.sqrt(d)

    bases = [np.eye(d, dtype=np.complex128)]
    for a in range(d):
        modulation = np.exp(2j * np.pi * ((a * powers) % p) / p)
        bases.append(modulation[:, None] * dft)
    alpha = cross_coherence(bases)
    constant = alpha * np.sqrt(d)
    logger.info(f"Built AMUB for d={d} over p={p}: cross coherence {alpha:.4f} = {constant:.3f}/sqrt(d)")
    return BasisSet(d=d, bases=bases, kind=MatrixKind.AMUB, max_cross_coherence=alpha,
                    params={"p": p, "k": k, "c": constant})


def mub_select_columns(bases: Union[BasisSet, Sequence[np.ndarray]], N: int) -> SensingMatrix:
    """
    r = floor(N/(d+1)) columns from every basis, plus one more from each of the first
    N - r(d+1) bases.
    """
    kind = bases.kind if isinstance(bases, BasisSet) else MatrixKind.MUB
    basis_list = list(bases.bases if isinstance(bases, BasisSet) else bases)
    d = basis_list[0].shape[0]
    if N > d * len(basis_list):
        raise InvalidInputError(f"Requested {N} columns but only {d * len(basis_list)} are available")
    r, extra = divmod(N, len(basis_list))
    columns = [basis[:, :r + (1 if k < extra else 0)] for k, basis in enumerate(basis_list)]
    data = np.hstack(columns)
    return SensingMatrix.from_data(data, kind, {"d": d, "N": N, "per_basis": r, "extra": extra}, normalize=True)
