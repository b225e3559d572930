import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from pydantic import BaseModel

from models.schemas import IdentificationPoint, RandomAccessResult, RecoveryResult, TradeoffCurve
from utils.serialization_utils import serialize_for_json

logger = logging.getLogger(__name__)

CURVE_COLUMNS = [
    "detector", "threshold", "arl", "arl_stderr", "arl_censored", "arl_lower_bound",
    "delay", "delay_stderr", "delay_retained", "false_alarms", "delay_censored",
]


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _write_csv(path: Path, columns: Sequence[str], rows: List[Dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _write_sidecar(path: Path, payload: Dict[str, Any]) -> None:
    # wall_time varies between runs; keep files byte-identical for identical configs
    text = json.dumps(serialize_for_json(payload), sort_keys=True, indent=2)
    _sidecar(path).write_text(text + "\n", encoding="utf-8")


def _metadata(curve: TradeoffCurve) -> Dict[str, Any]:
    return curve.metadata.model_dump(exclude={"wall_time"})


def write_curves(path: Union[str, Path], curves: Sequence[TradeoffCurve], config: BaseModel) -> Path:
    """One CSV row per curve point plus a JSON sidecar with the config and run metadata"""
    path = Path(path)
    try:
        rows = [{"detector": c.detector, **p.model_dump()} for c in curves for p in c.points]
        _write_csv(path, CURVE_COLUMNS, rows)
        _write_sidecar(path, {
            "config": config.model_dump(),
            "curves": {c.detector: _metadata(c) for c in curves},
        })
        logger.info(f"Wrote {len(rows)} curve points to {path}")
        return path
    except OSError as e:
        logger.error(f"Error writing results to {path}: {e}")
        raise


def write_recovery(path: Union[str, Path], results: Sequence[RecoveryResult], config: BaseModel,
                   metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    try:
        rows = [r.model_dump() for r in results]
        _write_csv(path, list(RecoveryResult.model_fields), rows)
        _write_sidecar(path, {"config": config.model_dump(), "metadata": metadata or {}})
        logger.info(f"Wrote recovery study for {len(rows)} detector(s) to {path}")
        return path
    except OSError as e:
        logger.error(f"Error writing recovery results to {path}: {e}")
        raise


def write_random_access(path: Union[str, Path], result: RandomAccessResult, config: BaseModel) -> Path:
    """Curve CSV at `path`, identification CSV next to it, one JSON sidecar for both."""
    path = Path(path)
    try:
        rows = [{"detector": c.detector, **p.model_dump()} for c in result.curves for p in c.points]
        _write_csv(path, CURVE_COLUMNS, rows)
        ident_path = path.with_name(f"{path.stem}_identification.csv")
        _write_csv(ident_path, list(IdentificationPoint.model_fields), [i.model_dump() for i in result.identification])
        _write_sidecar(path, {
            "config": config.model_dump(),
            "matrix": {"coherence": result.coherence, "rows": result.rows, "columns": result.columns,
                       "capacity": result.capacity},
            "curves": {c.detector: _metadata(c) for c in result.curves},
        })
        logger.info(f"Wrote random-access results to {path} and {ident_path}")
        return path
    except OSError as e:
        logger.error(f"Error writing random-access results to {path}: {e}")
        raise
