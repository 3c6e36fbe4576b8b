# Deptrail - FastAPI Recognition Service
# Classifies uploaded depth sequences with a trained recognizer bundle
# and exposes the experiment ledger.

import logging
import os
from datetime import datetime
from functools import lru_cache

from fastapi import Depends, FastAPI, HTTPException, Request, status
from fastapi.concurrency import run_in_threadpool
from sqlalchemy.orm import Session

from database import get_db
from depth_io import read_canonical
from errors import DeptrailError
from evaluation import Recognizer
from models import recent_runs
from schemas import ErrorResponse, ModelInfoResponse, RecognitionResponse

logger = logging.getLogger(__name__)

# Bundle written by `deptrail run` with save_model = true
MODEL_DIR = os.getenv("DEPTRAIL_MODEL_DIR", "runs/latest/model")

NO_MODEL = {503: {"model": ErrorResponse, "description": "No recognizer bundle is available"}}

# ============================================================================
# Initialize FastAPI Application
# ============================================================================
app = FastAPI(
    title="Deptrail Recognition API",
    description="Human action recognition from depth sequences (3D motion trails + GLAC + CRC)",
    version="1.0.0",
)


# ============================================================================
# Recognizer Dependency
# ============================================================================
@lru_cache(maxsize=4)
def load_recognizer(model_dir: str) -> Recognizer:
    logger.info("Loading recognizer bundle from %s", model_dir)
    return Recognizer.load(model_dir)


def get_recognizer() -> Recognizer:
    """Recognizer named by DEPTRAIL_MODEL_DIR; 503 when no bundle is there."""
    model_dir = os.getenv("DEPTRAIL_MODEL_DIR", MODEL_DIR)
    try:
        return load_recognizer(model_dir)
    except FileNotFoundError as e:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail=f"No recognizer available: {e}",
        )


# ============================================================================
# Root and Health Endpoints
# ============================================================================
@app.get("/")
def read_root():
    return {
        "message": "Welcome to the Deptrail Recognition API",
        "description": "POST a canonical .dseq depth sequence to /recognize",
        "timestamp": datetime.now().isoformat(),
        "version": "1.0.0",
    }


@app.get("/health")
def health_check():
    return {"status": "healthy", "timestamp": datetime.now().isoformat()}


# ============================================================================
# Model Endpoints
# ============================================================================
@app.get(
    "/model",
    response_model=ModelInfoResponse,
    summary="Loaded recognizer summary",
    responses=NO_MODEL,
)
def model_info(recognizer: Recognizer = Depends(get_recognizer)):
    return ModelInfoResponse(
        classes=[int(c) for c in recognizer.crc.classes],
        dictionary_size=recognizer.crc.size,
        reduced_dim=recognizer.pca.n_components,
        input_dim=recognizer.pca.input_dim,
        feature_set=recognizer.settings.feature_set,
        mu=recognizer.crc.mu,
    )


def classify_upload(recognizer: Recognizer, body: bytes):
    """Decode and classify one upload on a worker thread."""
    seq = read_canonical(body)
    return seq, recognizer.recognize(seq)


@app.post(
    "/recognize",
    response_model=RecognitionResponse,
    summary="Classify a depth sequence",
    description="Request body: raw bytes of a canonical DSEQ file (application/octet-stream)",
    responses={
        400: {"model": ErrorResponse, "description": "Body is not a valid sequence"},
        500: {"model": ErrorResponse, "description": "Unexpected pipeline failure"},
        **NO_MODEL,
    },
)
async def recognize(request: Request, recognizer: Recognizer = Depends(get_recognizer)):
    """
    Classify one uploaded depth sequence.

    Errors:
        400: the body is not a valid canonical sequence, or the pipeline
             rejects it (e.g. templates too small for the spatial grid)
        503: no recognizer bundle is available
    """
    body = await request.body()
    try:
        seq, decision = await run_in_threadpool(classify_upload, recognizer, body)
    except DeptrailError as e:
        logger.warning("Rejected upload: %s", e)
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        logger.exception("Recognition failed")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Error classifying sequence: {str(e)}",
        )

    return RecognitionResponse(
        seq_id=seq.seq_id,
        predicted_class=decision.predicted_class,
        residuals=decision.residual_map,
        ridge=decision.ridge,
        reduced_dim=recognizer.pca.n_components,
    )


# ============================================================================
# Experiment Ledger Endpoint
# ============================================================================
@app.get("/runs", summary="Recent experiment runs")
def list_runs(protocol: str = None, limit: int = 50, db: Session = Depends(get_db)):
    if limit < 1:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail="limit must be at least 1")
    return [run.to_dict() for run in recent_runs(db, protocol=protocol, limit=limit)]


# ============================================================================
# Run the Application
# ============================================================================
if __name__ == "__main__":
    import uvicorn

    uvicorn.run("main:app", host="127.0.0.1", port=8000, reload=True)
