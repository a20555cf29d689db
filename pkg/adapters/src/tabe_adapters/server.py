"""Request dispatch: stdio NDJSON loop and HTTP app over one core handler.

Responses are cached by request id, so orchestrator retries of the same
request are idempotent. Model load failures, bad payloads, and handler
crashes all come back as protocol error objects; the serving loop never
dies on a request. Progress goes to stderr.
"""

from __future__ import annotations

import json
import sys
import threading
from pathlib import Path

from fastapi import FastAPI, Request

from . import __version__
from .config import ROLES, AdapterConfig
from .models import ModelLoadError, load_model
from .protocol import ProtocolError, error_response, ok_response, validate_request

_KIND_TO_ROLE = {
    "segment": "segmenter",
    "depth": "depth_estimator",
    "outpaint": "outpainter",
}


class AdapterServer:
    def __init__(self, config: AdapterConfig):
        self.config = config
        self._models: dict[str, object] = {}
        self._cache: dict[str, dict] = {}
        self._lock = threading.Lock()

    def _model(self, role: str):
        # lazy per-role load so a broken model yields error responses,
        # never a dead server
        if role not in self._models:
            self._models[role] = load_model(
                role, self.config.models[role], self.config.device
            )
        return self._models[role]

    def handle(self, request: dict) -> dict:
        request_id = request.get("request_id") if isinstance(request, dict) else None
        if request_id is not None:
            with self._lock:
                if request_id in self._cache:
                    return self._cache[request_id]
        response = self._handle_fresh(request)
        if request_id is not None:
            with self._lock:
                self._cache[request_id] = response
        return response

    def _handle_fresh(self, request: dict) -> dict:
        try:
            validate_request(request)
        except ProtocolError as exc:
            return error_response(request if isinstance(request, dict) else {}, "bad_request", str(exc))
        kind = request["kind"]
        try:
            if kind == "health":
                return ok_response(request, {
                    "status": "ok",
                    "server": f"tabe-adapters/{__version__}",
                    "capabilities": ["segment", "depth", "outpaint"],
                })
            role = _KIND_TO_ROLE[kind]
            model = self._model(role)
            self._log(f"{kind} {request['request_id']}: dispatching to {role}")
            payload = model(request["payload"], Path(request["root"]), request["request_id"])
            return ok_response(request, payload)
        except ModelLoadError as exc:
            return error_response(request, "model_load_failure", str(exc))
        except ProtocolError as exc:
            return error_response(request, "bad_response", str(exc))
        except Exception as exc:
            return error_response(request, type(exc).__name__, str(exc))

    @staticmethod
    def _log(message: str) -> None:
        print(f"[tabe-adapter] {message}", file=sys.stderr, flush=True)


def serve_stdio(server: AdapterServer) -> None:
    """One JSON request per stdin line, one JSON response per stdout line."""
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            response = error_response({}, "bad_json", str(exc))
        else:
            response = server.handle(request)
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()


def create_app(server: AdapterServer) -> FastAPI:
    """FastAPI app exposing the same bodies over HTTP POST."""
    app = FastAPI(title="tabe-adapter", version=__version__)

    @app.post("/rpc")
    async def rpc(request: Request):
        try:
            body = await request.json()
        except Exception as exc:
            return error_response({}, "bad_json", str(exc))
        return server.handle(body)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "roles": list(ROLES)}

    return app


def serve(config: AdapterConfig) -> None:
    server = AdapterServer(config)
    if config.kind == "subprocess":
        serve_stdio(server)
    else:
        import uvicorn

        uvicorn.run(create_app(server), host=config.host, port=config.port)
