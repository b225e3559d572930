import json
import logging
from pathlib import Path
from typing import Type, TypeVar, Union

import yaml
from pydantic import BaseModel, ValidationError

from models.errors import ConfigurationError

logger = logging.getLogger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)


def read_config_file(path: Union[str, Path]) -> dict:
    """Parse a YAML or JSON experiment file into a plain dict"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
        data = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except OSError as e:
        logger.error(f"Error reading config file {path}: {e}")
        raise ConfigurationError(f"Cannot read config file {path}: {e}") from e
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        logger.error(f"Error parsing config file {path}: {e}")
        raise ConfigurationError(f"Cannot parse config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {path} must hold a mapping at the top level")
    return data


def validate_config(data: dict, model: Type[ConfigT]) -> ConfigT:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        logger.error(f"Invalid {model.__name__}: {e}")
        raise ConfigurationError(f"Invalid {model.__name__}: {e}") from e


def load_config(path: Union[str, Path], model: Type[ConfigT], **overrides) -> ConfigT:
    """Load and validate a config file; non-None keyword overrides replace top-level keys."""
    data = read_config_file(path)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return validate_config(data, model)
