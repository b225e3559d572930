import struct
import logging
from pathlib import Path
from typing import Union

import numpy as np

from models.errors import InvalidInputError
from models.schemas import MatrixKind
from services.matrices import SensingMatrix

logger = logging.getLogger(__name__)

MAGIC = b"CSMX"
# magic, M, N, kind tag (ASCII, NUL padded); body is row-major little-endian complex128
HEADER = struct.Struct("<4sQQ16s")

PathLike = Union[str, Path]


def _is_text(path: Path) -> bool:
    return path.suffix.lower() == ".txt"


def save_matrix_binary(path: PathLike, matrix: SensingMatrix) -> Path:
    """Write the dense binary format"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        header = HEADER.pack(MAGIC, matrix.M, matrix.N, matrix.kind.value.encode("ascii"))
        body = np.ascontiguousarray(matrix.data, dtype="<c16").tobytes(order="C")
        path.write_bytes(header + body)
        logger.info(f"Saved {matrix.M}x{matrix.N} {matrix.kind.value} matrix to {path}")
        return path
    except OSError as e:
        logger.error(f"Error saving matrix to {path}: {e}")
        raise


def load_matrix_binary(path: PathLike) -> SensingMatrix:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        logger.error(f"Error reading matrix file {path}: {e}")
        raise InvalidInputError(f"Cannot read matrix file {path}: {e}") from e
    if len(raw) < HEADER.size:
        raise InvalidInputError(f"{path} is too short to hold a matrix header")
    magic, M, N, tag = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidInputError(f"{path} is not a matrix file (bad magic {magic!r})")
    expected = HEADER.size + 16 * M * N
    if len(raw) != expected:
        raise InvalidInputError(f"{path} holds {len(raw)} bytes, expected {expected} for {M}x{N}")
    try:
        kind = MatrixKind(tag.rstrip(b"\0").decode("ascii"))
    except ValueError as e:
        raise InvalidInputError(f"Unknown matrix kind tag in {path}") from e
    data = np.frombuffer(raw, dtype="<c16", offset=HEADER.size).reshape(M, N)
    return SensingMatrix.from_data(data, kind, {"source": str(path)})


def save_matrix_text(path: PathLike, matrix: SensingMatrix) -> Path:
    """
    Lossless text format: first line "M N kind", then one line per row of
    space-separated "re im" pairs written with repr (round-trips exactly).
    """
    path = Path(path)
    lines = [f"{matrix.M} {matrix.N} {matrix.kind.value}"]
    for row in matrix.data:
        lines.append(" ".join(f"{z.real!r} {z.imag!r}" for z in row.tolist()))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    except OSError as e:
        logger.error(f"Error saving matrix to {path}: {e}")
        raise


def load_matrix_text(path: PathLike) -> SensingMatrix:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").split("\n")
        M, N, tag = lines[0].split()
        M, N = int(M), int(N)
        values = np.array([[float(v) for v in line.split()] for line in lines[1:M + 1]])
        kind = MatrixKind(tag)
    except (OSError, ValueError, IndexError) as e:
        logger.error(f"Error parsing matrix text file {path}: {e}")
        raise InvalidInputError(f"Cannot parse matrix text file {path}: {e}") from e
    if values.shape != (M, 2 * N):
        raise InvalidInputError(f"{path} does not hold a {M}x{N} complex matrix")
    return SensingMatrix.from_data(values[:, 0::2] + 1j * values[:, 1::2], kind, {"source": str(path)})


def save_matrix(path: PathLike, matrix: SensingMatrix) -> Path:
    path = Path(path)
    return save_matrix_text(path, matrix) if _is_text(path) else save_matrix_binary(path, matrix)


def load_matrix(path: PathLike) -> SensingMatrix:
    path = Path(path)
    return load_matrix_text(path) if _is_text(path) else load_matrix_binary(path)


# Fiducials: one complex entry per line, "re im"
def save_fiducial(path: PathLike, vector: np.ndarray) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{z.real!r} {z.imag!r}\n" for z in np.asarray(vector).tolist()), encoding="utf-8")
        logger.info(f"Saved fiducial of dimension {len(vector)} to {path}")
        return path
    except OSError as e:
        logger.error(f"Error saving fiducial to {path}: {e}")
        raise


def load_fiducial_vector(path: PathLike) -> np.ndarray:
    path = Path(path)
    try:
        rows = [line.split() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        values = np.array([[float(re), float(im)] for re, im in rows])
    except (OSError, ValueError) as e:
        logger.error(f"Error reading fiducial file {path}: {e}")
        raise InvalidInputError(f"Cannot read fiducial file {path}: {e}") from e
    if values.size == 0:
        raise InvalidInputError(f"Fiducial file {path} is empty")
    return values[:, 0] + 1j * values[:, 1]
