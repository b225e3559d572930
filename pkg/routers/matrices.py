# Standard Library Imports
import logging

# Third-Party Imports
from fastapi import APIRouter, HTTPException
from fastapi.concurrency import run_in_threadpool

# Application-Specific Imports
from models.errors import ChangeDetectionError
from models.schemas import APIResponse, MatrixSpec
from services.matrix_factory import build_sensing_matrix
from utils.serialization_utils import serialize_for_json

logger = logging.getLogger(__name__)
router = APIRouter()

@router.post("/build", response_model=APIResponse)
async def build_matrix(spec: MatrixSpec):
    """
    Build a sensing matrix and report its shape, coherence and provenance
    """
    try:
        logger.info(f"Building {spec.kind.value} matrix (M={spec.M}, N={spec.N})")
        matrix = await run_in_threadpool(build_sensing_matrix, spec)
        return APIResponse(
            success=True,
            message=f"Built {matrix.M}x{matrix.N} {matrix.kind.value} matrix",
            data=serialize_for_json(matrix.info())
        )
    except ChangeDetectionError as e:
        logger.error(f"Matrix build failed: {e}")
        raise HTTPException(status_code=e.http_status, detail=str(e))
    except Exception as e:
        logger.error(f"Matrix build error: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Matrix build failed: {str(e)}")
