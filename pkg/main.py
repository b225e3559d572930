#standard library imports
import os
import logging
from pathlib import Path
from contextlib import asynccontextmanager

# Third-party imports
from dotenv import load_dotenv
import uvicorn
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

# Local application imports
from config import settings
from routers import matrices, experiments

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

# Prepare output directories
@asynccontextmanager
async def lifespan(app: FastAPI):
    if os.environ.get("ENV") != "test":
        Path(settings.RESULTS_DIR).mkdir(parents=True, exist_ok=True)
        logger.info(f"Writing experiment results under {settings.RESULTS_DIR}")
    yield

app = FastAPI(
    title="Sparse Change Detection API",
    description="CUSUM change detection for sparse signals under compressive measurements",
    version="1.0.0",
    lifespan=lifespan,
    debug=settings.DEBUG
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=[settings.CORS_ORIGINS],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(matrices.router, prefix="/matrices", tags=["matrices"])
app.include_router(experiments.router, prefix="/experiments", tags=["experiments"])

@app.get("/")
async def root():
    return {"message": "Sparse Change Detection API is running"}

@app.get("/health")
async def health_check():
    return {"status": "healthy"}

if __name__ == "__main__":

    uvicorn.run(app, host="0.0.0.0", port=8000)
