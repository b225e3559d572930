# Standard Library Imports
import logging

# Third-Party Imports
from fastapi import APIRouter, HTTPException
from fastapi.concurrency import run_in_threadpool

# Application-Specific Imports
from db.results_store import write_curves
from models.errors import ChangeDetectionError
from models.schemas import APIResponse, DetectRequest, ExperimentConfig
from services.harness import detect, sweep
from utils.serialization_utils import serialize_for_json

logger = logging.getLogger(__name__)
router = APIRouter()

@router.post("/detect", response_model=APIResponse)
async def run_detection(request: DetectRequest):
    """
    Single detector run; returns the stopping report
    """
    try:
        spec = request.config.detectors[min(request.detector_index, len(request.config.detectors) - 1)]
        logger.info(f"Detect request: {spec.name}, trial {request.trial_index}, no_change={request.no_change}")
        report = await run_in_threadpool(
            detect,
            request.config,
            detector_index=request.detector_index,
            change_point=request.change_point,
            no_change=request.no_change,
            trial_index=request.trial_index,
            record_trace=request.record_trace,
        )
        message = "Change declared" if not report.censored else "No change declared before the horizon"
        return APIResponse(success=True, message=message, data=report.model_dump())
    except ChangeDetectionError as e:
        logger.error(f"Detection failed: {e}")
        raise HTTPException(status_code=e.http_status, detail=str(e))
    except Exception as e:
        logger.error(f"Detection error: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Detection failed: {str(e)}")

@router.post("/sweep", response_model=APIResponse)
async def run_sweep(config: ExperimentConfig):
    """
    Threshold sweep producing one ARL / delay tradeoff curve per detector
    """
    try:
        logger.info(f"Sweep request '{config.name}' with {len(config.detectors)} detector(s)")
        curves = await run_in_threadpool(sweep, config)
        if config.out:
            await run_in_threadpool(write_curves, config.out, curves, config)
        return APIResponse(
            success=True,
            message=f"Computed {len(curves)} tradeoff curve(s)",
            data=serialize_for_json([c.model_dump() for c in curves])
        )
    except ChangeDetectionError as e:
        logger.error(f"Sweep failed: {e}")
        raise HTTPException(status_code=e.http_status, detail=str(e))
    except Exception as e:
        logger.error(f"Sweep error: {str(e)}")
        raise HTTPException(status_code=500, detail=f"Sweep failed: {str(e)}")
