"""Model-backend wire protocol: envelopes, schema validation, transports.

One request/response JSON body per call, schema frozen in
``schema_v1.json``. Bodies travel as single newline-delimited lines over a
subprocess's stdin/stdout, or as HTTP POST bodies — identical either way.
Payloads reference pixel data by file path relative to the request's
``root`` directory; binary data never travels inline.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from ..core import BackendError

PROTOCOL_VERSION = "tabe/1"
SCHEMA_FILE = "schema_v1.json"
REQUEST_KINDS = ("health", "segment", "depth", "outpaint")


@lru_cache(maxsize=1)
def load_schema() -> dict:
    with resources.files(__package__).joinpath(SCHEMA_FILE).open("r") as fh:
        return json.load(fh)


@lru_cache(maxsize=2)
def _validator(definition: str) -> jsonschema.Draft7Validator:
    schema = dict(load_schema())
    schema["$ref"] = f"#/definitions/{definition}"
    return jsonschema.Draft7Validator(schema)


def _check(obj: dict, definition: str, what: str) -> None:
    errors = sorted(_validator(definition).iter_errors(obj), key=lambda e: len(e.path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise BackendError(f"protocol violation in {what}: {best.message}")


def validate_request(obj: dict) -> None:
    _check(obj, "request", f"{obj.get('kind', '?')} request")


def validate_response(obj: dict, expected: dict | None = None) -> None:
    _check(obj, "response", f"{obj.get('kind', '?')} response")
    if expected is not None:
        if obj["request_id"] != expected["request_id"]:
            raise BackendError(
                f"response id {obj['request_id']!r} does not match request"
                f" id {expected['request_id']!r}"
            )
        if obj["kind"] != expected["kind"]:
            raise BackendError(
                f"response kind {obj['kind']!r} does not match request"
                f" kind {expected['kind']!r}"
            )


def make_request(kind: str, payload: dict, root: str, request_id: str) -> dict:
    req = {
        "protocol": PROTOCOL_VERSION,
        "request_id": request_id,
        "kind": kind,
        "root": str(root),
        "payload": payload,
    }
    validate_request(req)
    return req


def make_response(request: dict, payload: dict) -> dict:
    resp = {
        "protocol": PROTOCOL_VERSION,
        "request_id": request["request_id"],
        "kind": request["kind"],
        "ok": True,
        "payload": payload,
    }
    validate_response(resp)
    return resp


def make_error_response(request: dict, code: str, message: str) -> dict:
    resp = {
        "protocol": PROTOCOL_VERSION,
        "request_id": request.get("request_id", "unknown"),
        "kind": request.get("kind", "health"),
        "ok": False,
        "error": {"code": code, "message": message},
    }
    validate_response(resp)
    return resp
