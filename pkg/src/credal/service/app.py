"""FastAPI application exposing the probe/audit/dominate/diff pipeline."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import CredalError
from . import handlers, schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="credal",
        version=__version__,
        description=(
            "Computes credences for language-model beliefs from next-token "
            "probabilities and audits them against coherence norms."
        ),
    )

    @app.exception_handler(CredalError)
    async def credal_error_handler(request: Request, exc: CredalError):
        return JSONResponse(
            status_code=422,
            content={"error": type(exc).__name__, "message": str(exc)},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/probe", response_model=schemas.ProbeResponse)
    def probe(request: schemas.ProbeRequest) -> schemas.ProbeResponse:
        return handlers.run_probe(request)

    @app.post("/audit", response_model=schemas.AuditResponse)
    def audit(request: schemas.AuditRequest) -> schemas.AuditResponse:
        return handlers.run_audit_request(request)

    @app.post("/dominate", response_model=schemas.DominateResponse)
    def dominate(request: schemas.DominateRequest) -> schemas.DominateResponse:
        return handlers.run_dominate(request)

    @app.post("/diff", response_model=schemas.DiffResponse)
    def diff(request: schemas.DiffRequest) -> schemas.DiffResponse:
        return handlers.run_diff(request)

    return app
