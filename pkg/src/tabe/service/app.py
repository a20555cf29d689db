"""FastAPI application wrapping the toolkit handlers."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..core import BackendError, ConfigError, TabeError
from . import handlers, models

_STATUS = {ConfigError: 400, BackendError: 502}


def create_app() -> FastAPI:
    app = FastAPI(title="tabe", version=__version__)

    @app.exception_handler(TabeError)
    async def tabe_error_handler(request: Request, exc: TabeError):
        status = next(
            (code for cls, code in _STATUS.items() if isinstance(exc, cls)), 422
        )
        return JSONResponse(
            status_code=status,
            content={
                "error": {
                    "code": type(exc).__name__,
                    "exit_code": exc.exit_code,
                    "message": str(exc),
                }
            },
        )

    @app.get("/health", response_model=models.HealthResponse)
    def health():
        return handlers.health()

    @app.post("/occlusion", response_model=models.OcclusionResponse)
    def occlusion(req: models.OcclusionRequest):
        return handlers.occlusion(req)

    @app.post("/bbox", response_model=models.BboxResponse)
    def bbox(req: models.BboxRequest):
        return handlers.bbox(req)

    @app.post("/target-region", response_model=models.TargetRegionResponse)
    def target_region(req: models.TargetRegionRequest):
        return handlers.target_region(req)

    @app.post("/composite", response_model=models.CompositeResponse)
    def composite(req: models.CompositeRequest):
        return handlers.composite(req)

    @app.post("/trainprep", response_model=models.TrainprepResponse)
    def trainprep(req: models.TrainprepRequest):
        return handlers.trainprep(req)

    @app.post("/eval", response_model=models.EvalResponse)
    def evaluate(req: models.EvalRequest):
        return handlers.evaluate(req)

    @app.post("/stats", response_model=models.StatsResponse)
    def stats(req: models.StatsRequest):
        return handlers.stats(req)

    @app.post("/pipeline/run", response_model=models.PipelineRunResponse)
    def pipeline_run(req: models.PipelineRunRequest):
        return handlers.pipeline_run(req)

    @app.post("/render", response_model=models.RenderResponse)
    def render(req: models.RenderRequest):
        return handlers.render(req)

    @app.post("/synth", response_model=models.SynthResponse)
    def synth(req: models.SynthRequest):
        return handlers.synth(req)

    return app


app = create_app()
