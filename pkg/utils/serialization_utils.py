import enum
import json
import math
import hashlib
import traceback
from typing import Any

import numpy as np

# Recursively serialize values for JSON output (numpy, enums, pydantic models)
def serialize_for_json(data: Any) -> Any:
    if isinstance(data, dict):
        return {str(k): serialize_for_json(v) for k, v in data.items()}
    elif isinstance(data, (list, tuple)):
        return [serialize_for_json(i) for i in data]
    elif isinstance(data, enum.Enum):
        return data.value
    elif hasattr(data, "model_dump"):
        return serialize_for_json(data.model_dump())
    elif isinstance(data, np.ndarray):
        return serialize_for_json(data.tolist())
    elif isinstance(data, (np.integer,)):
        return int(data)
    elif isinstance(data, (np.floating,)):
        return serialize_for_json(float(data))
    elif isinstance(data, (complex, np.complexfloating)):
        return [float(data.real), float(data.imag)]
    elif isinstance(data, float) and not math.isfinite(data):
        return str(data)
    return data

def canonical_json(data: Any) -> str:
    """Stable JSON text: sorted keys, no whitespace variance."""
    return json.dumps(serialize_for_json(data), sort_keys=True, separators=(",", ":"))

def config_hash(data: Any) -> str:
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()

# Enhanced error logging
def log_exception(logger, msg: str, exc: Exception):
    logger.error(f"{msg}: {str(exc)}\n{traceback.format_exc()}")
