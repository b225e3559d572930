# Standard Library Imports
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

# Third-Party Imports
import numpy as np

# Application-Specific Imports
from models.errors import InvalidInputError, UnsupportedDegreeError

logger = logging.getLogger(__name__)

# Polynomial exponents, e.g. [5, 2, 0] is x^5 + x^2 + 1.
PREFERRED_PAIRS: Dict[int, Tuple[List[int], List[int]]] = {
    5: ([5, 2, 0], [5, 4, 3, 2, 0]),
    6: ([6, 1, 0], [6, 5, 2, 1, 0]),
    7: ([7, 3, 0], [7, 3, 2, 1, 0]),
}


@dataclass(frozen=True)
class GoldFamily:
    n: int
    sequences: np.ndarray  # (2^n + 1) x M, bipolar, unit norm
    bound: float

    @property
    def M(self) -> int:
        return self.sequences.shape[1]

    @property
    def size(self) -> int:
        return self.sequences.shape[0]


def correlation_bound(n: int) -> float:
    """r(n) = t(n)/M with t(n) = 2^((n+1)/2)+1 for odd n and 2^((n+2)/2)+1 for even n."""
    M = 2 ** n - 1
    t = 2 ** ((n + 1) // 2) + 1 if n % 2 else 2 ** ((n + 2) // 2) + 1
    return t / M


def m_sequence(polynomial: Sequence[int]) -> np.ndarray:
    """
    One period of the binary m-sequence with recurrence s[k+n] = XOR of s[k+e] over the
    lower exponents e of the polynomial. The register starts at all ones.
    """
    n = max(polynomial)
    taps = [e for e in polynomial if e < n]
    M = 2 ** n - 1
    s = np.zeros(M + n, dtype=np.int8)
    s[:n] = 1
    for k in range(M):
        s[k + n] = np.bitwise_xor.reduce(s[[k + e for e in taps]])
    return s[:M]


def to_bipolar(bits: np.ndarray) -> np.ndarray:
    """{0, 1} -> {+1, -1}, scaled to unit norm."""
    return (1.0 - 2.0 * bits.astype(float)) / np.sqrt(bits.shape[-1])


def cyclic_cross_correlations(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """
    R[i, l, s] = sum_k first[i, k] * second[l, (k + s) mod M], for real sequences,
    computed with one FFT per row.
    """
    F = np.fft.fft(np.atleast_2d(first), axis=1)
    G = np.fft.fft(np.atleast_2d(second), axis=1)
    return np.real(np.fft.ifft(F.conj()[:, None, :] * G[None, :, :], axis=2))


def max_correlation(sequences: np.ndarray) -> Tuple[float, float]:
    """(max cross-correlation over distinct pairs and all shifts, max off-peak autocorrelation)."""
    R = np.abs(cyclic_cross_correlations(sequences, sequences))
    P = sequences.shape[0]
    auto = R[np.arange(P), np.arange(P)]
    off_peak = float(auto[:, 1:].max()) if auto.shape[1] > 1 else 0.0
    R[np.arange(P), np.arange(P)] = 0.0
    return float(R.max()), off_peak


def gold_family(n: int, preferred_pair: Optional[Tuple[Sequence[int], Sequence[int]]] = None) -> GoldFamily:
    """
    The 2^n + 1 Gold sequences of length 2^n - 1: both m-sequences plus u XOR (v shifted by s)
    for every cyclic shift s, mapped to bipolar unit vectors. Raises if the family breaks r(n).
    """
    if preferred_pair is None:
        if n not in PREFERRED_PAIRS:
            raise UnsupportedDegreeError(f"No built-in preferred pair for n={n} (known: {sorted(PREFERRED_PAIRS)})")
        preferred_pair = PREFERRED_PAIRS[n]
    if max(preferred_pair[0]) != n or max(preferred_pair[1]) != n:
        raise InvalidInputError(f"Preferred pair polynomials must both have degree {n}")

    u = m_sequence(preferred_pair[0])
    v = m_sequence(preferred_pair[1])
    M = u.shape[0]
    bits = [u, v] + [np.bitwise_xor(u, np.roll(v, -s)) for s in range(M)]
    sequences = to_bipolar(np.array(bits))
    sequences.setflags(write=False)

    bound = correlation_bound(n)
    cross, _ = max_correlation(sequences)
    if cross > bound + 1e-9:
        logger.error(f"Gold family n={n} violates its correlation bound: {cross:.5f} > {bound:.5f}")
        raise InvalidInputError(f"Polynomials for n={n} are not a preferred pair (max correlation {cross:.5f})")
    logger.info(f"Built Gold family n={n}: {sequences.shape[0]} sequences of length {M}, max |R| {cross:.5f}")
    return GoldFamily(n=n, sequences=sequences, bound=bound)


def gold_capacity(n: int, Delta: int) -> int:
    M = 2 ** n - 1
    return (2 ** n + 1) * (M // (Delta + 1))


def gold_codes_for_offsets(family: GoldFamily, Delta: int, P: Optional[int] = None) -> List[np.ndarray]:
    """
    Codes safe under timing offsets up to Delta: every Gold sequence together with its cyclic
    shifts by multiples of Delta+1, so no two codes are shifts of each other within Delta.
    Ordered sequence-major; the first P are returned.
    """
    M = family.M
    if Delta + 1 > M:
        raise InvalidInputError(f"Delta+1={Delta + 1} exceeds the code length {M}")
    shifts = [j * (Delta + 1) for j in range(M // (Delta + 1))]
    capacity = family.size * len(shifts)
    P = capacity if P is None else P
    if P > capacity:
        raise InvalidInputError(f"{P} users exceed the Gold code capacity {capacity} for n={family.n}, Delta={Delta}")
    codes = [np.roll(seq, s) for seq in family.sequences for s in shifts]
    return codes[:P]
