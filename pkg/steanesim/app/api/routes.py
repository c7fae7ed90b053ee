import json
import logging
from typing import Optional

from fastapi import APIRouter, File, Form, HTTPException, UploadFile
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from ..config import settings
from ..exceptions import ConfigError, DegenerateScenarioError, InputError, ReportSchemaError
from ..models.schemas import RunRequest
from ..services.scenario_runner import PRESETS, ScenarioRunner, conventions_hash, diff_reports

logger = logging.getLogger(__name__)

router = APIRouter()

VERSION = "1.0.0"


def _bundle_response(bundle) -> JSONResponse:
    return JSONResponse(status_code=200, content=json.loads(bundle.model_dump_json(by_alias=True, exclude_none=True)))


@router.get("/health")
async def health_check():
    """Liveness plus the conventions hash every report carries"""
    return {
        "status": "healthy",
        "service": "steanesim",
        "version": VERSION,
        "conventions_sha256": conventions_hash(),
        "default_order": settings.DEFAULT_ORDER,
    }


@router.post("/run")
def run_scenarios(request: RunRequest):
    """
    Run scenarios and return a report bundle

    Body:
    - scenarios: list of scenario configs (sequence, qec, metric, order, angles, ...)
    - strategy: optional engine strategy ("propagate" or "paths")
    - timings: include wall times
    """
    try:
        bundle = ScenarioRunner.run_bundle(request.scenarios, strategy=request.strategy, timings=request.timings)
    except DegenerateScenarioError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except (InputError, ConfigError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    return _bundle_response(bundle)


@router.get("/presets/{name}")
def run_preset(name: str, order: Optional[int] = None):
    """Run a built-in table (table1, table2, perfect-qec)"""
    if name not in PRESETS:
        raise HTTPException(status_code=404, detail=f"Unknown preset. Available: {', '.join(PRESETS)}")
    try:
        bundle = ScenarioRunner.run_preset(name, order=order)
    except DegenerateScenarioError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except (InputError, ConfigError, ValidationError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    return _bundle_response(bundle)


@router.post("/diff")
async def diff(
    a: UploadFile = File(...),
    b: UploadFile = File(...),
    tolerance: Optional[float] = Form(None),
):
    """
    Compare two JSON reports

    Parameters:
    - a, b: report files produced by /run, /presets or the CLI
    - tolerance: optional absolute tolerance per coefficient

    Returns:
    - per-monomial deltas and whether all of them are within tolerance
    """
    contents = []
    for upload in (a, b):
        content = await upload.read()
        if len(content) > settings.MAX_REPORT_SIZE:
            raise HTTPException(
                status_code=400,
                detail=f"Report too large. Maximum size: {settings.MAX_REPORT_SIZE / 1024 / 1024}MB",
            )
        contents.append(content)

    try:
        result = diff_reports(contents[0], contents[1], tolerance)
    except (ReportSchemaError, InputError) as e:
        raise HTTPException(status_code=400, detail=str(e))

    logger.info("diff of %s and %s: ok=%s", a.filename, b.filename, result.ok)
    return JSONResponse(
        status_code=200,
        content={
            "success": True,
            "ok": result.ok,
            "diff": result.model_dump(exclude_none=True),
        },
    )
