from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import Optional

class Settings(BaseSettings):
    ENV: Optional[str] = Field("dev", description="dev | test")
    DEBUG: bool = Field(False)
    LOG_LEVEL: str = Field("INFO")

    # Filesystem
    RESULTS_DIR: str = Field("results", description="Default directory for CSV/JSON experiment output")
    FIDUCIAL_DIR: str = Field("fiducials", description="Cache of searched / imported SIC fiducials")

    # Monte Carlo defaults
    DEFAULT_HORIZON: int = Field(1_000_000, ge=1)
    DEFAULT_SEED: int = Field(20190101, ge=0)
    DEFAULT_THREADS: int = Field(1, ge=1)
    SHOW_PROGRESS: bool = Field(True)

    # Detector / construction limits
    OPTIMAL_SUBSET_CAP: int = Field(10_000, ge=1)
    FIDUCIAL_TOL: float = Field(1e-10, gt=0)
    FIDUCIAL_MAX_RESTARTS: int = Field(50, ge=1)

    CORS_ORIGINS: str = Field("*")

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")

settings = Settings()
