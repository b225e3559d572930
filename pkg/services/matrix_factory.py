# Standard Library Imports
import logging
from pathlib import Path
from typing import Optional

# Application-Specific Imports
from config import settings
from db.matrix_store import load_fiducial_vector, load_matrix, save_fiducial
from models.errors import InvalidInputError
from models.schemas import FiducialSource, MatrixKind, MatrixSpec
from services.matrices import SensingMatrix, random_matrix, unitary_matrix
from services.mub import amub, mub, mub_select_columns
from services.sic_povm import Fiducial, analytic_fiducial, fiducial_from_vector, find_fiducial, sic_povm
from utils.rng_utils import STREAM_FIDUCIAL, STREAM_MATRIX, trial_rng

logger = logging.getLogger(__name__)

BUNDLED_FIDUCIAL_DIR = Path(__file__).resolve().parent.parent / "fiducials"


def fiducial_cache_path(d: int) -> Path:
    return Path(settings.FIDUCIAL_DIR) / f"sic_d{d}.txt"


def bundled_fiducial_path(d: int) -> Path:
    return BUNDLED_FIDUCIAL_DIR / f"sic_d{d}.txt"


def resolve_fiducial(d: int, path: Optional[str] = None, seed: Optional[int] = None, cache: bool = True) -> Fiducial:
    """
    Fiducial for dimension d, from (in order) an explicit file, the analytic d=2,3 vectors,
    the vectors shipped for d=4..9, the on-disk cache, or a seeded numerical search whose result is cached.
    """
    if path:
        vector = load_fiducial_vector(path)
        if vector.shape[0] != d:
            raise InvalidInputError(f"Fiducial in {path} has dimension {vector.shape[0]}, expected {d}")
        return fiducial_from_vector(vector, FiducialSource.FILE_IMPORT)

    fiducial = analytic_fiducial(d)
    if fiducial is not None:
        return fiducial

    bundled = bundled_fiducial_path(d)
    if bundled.exists():
        return fiducial_from_vector(load_fiducial_vector(bundled), FiducialSource.NUMERIC_SEARCH)

    cached = fiducial_cache_path(d)
    if cache and cached.exists():
        logger.info(f"Using cached SIC fiducial for d={d} from {cached}")
        return fiducial_from_vector(load_fiducial_vector(cached), FiducialSource.NUMERIC_SEARCH)

    seed = settings.DEFAULT_SEED if seed is None else seed
    fiducial = find_fiducial(d, trial_rng(seed, STREAM_FIDUCIAL, d), tol=settings.FIDUCIAL_TOL,
                             max_restarts=settings.FIDUCIAL_MAX_RESTARTS)
    if cache:
        try:
            save_fiducial(cached, fiducial.vector)
        except OSError as e:
            logger.warning(f"Could not cache fiducial for d={d}: {e}")
    return fiducial


def build_sensing_matrix(spec: MatrixSpec) -> SensingMatrix:
    """Construct the matrix a MatrixSpec describes. M is the dimension d for sic_povm, mub and amub."""
    kind = spec.kind
    if kind == MatrixKind.CUSTOM:
        return load_matrix(spec.path)

    M = spec.M
    if kind == MatrixKind.UNITARY:
        if spec.N not in (None, M):
            raise InvalidInputError("Unitary matrices are square: N must equal M")
        return unitary_matrix(M, spec.seed or 0)
    if kind == MatrixKind.SIC_POVM:
        return sic_povm(resolve_fiducial(M, spec.fiducial_path, spec.seed), spec.N)
    if kind in (MatrixKind.MUB, MatrixKind.AMUB):
        bases = mub(M) if kind == MatrixKind.MUB else amub(M)
        return mub_select_columns(bases, spec.N or M * (M + 1))
    if kind in (MatrixKind.GAUSSIAN, MatrixKind.BERNOULLI, MatrixKind.DFT_ROWS):
        if spec.N is None:
            raise InvalidInputError(f"{kind.value} matrices need N")
        seed = settings.DEFAULT_SEED if spec.seed is None else spec.seed
        return random_matrix(kind, M, spec.N, trial_rng(seed, STREAM_MATRIX))
    raise InvalidInputError(f"{kind.value} matrices are not built from a MatrixSpec")
