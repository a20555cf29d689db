"""Wire-protocol validation against the vendored frozen schema."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from . import PROTOCOL_VERSION


class ProtocolError(Exception):
    pass


@lru_cache(maxsize=1)
def load_schema() -> dict:
    with resources.files(__package__).joinpath("schema_v1.json").open("r") as fh:
        return json.load(fh)


@lru_cache(maxsize=2)
def _validator(definition: str) -> jsonschema.Draft7Validator:
    schema = dict(load_schema())
    schema["$ref"] = f"#/definitions/{definition}"
    return jsonschema.Draft7Validator(schema)


def validate_request(obj: dict) -> None:
    errors = sorted(_validator("request").iter_errors(obj), key=lambda e: len(e.path))
    if errors:
        raise ProtocolError(jsonschema.exceptions.best_match(errors).message)


def validate_response(obj: dict) -> None:
    errors = sorted(_validator("response").iter_errors(obj), key=lambda e: len(e.path))
    if errors:
        raise ProtocolError(jsonschema.exceptions.best_match(errors).message)


def ok_response(request: dict, payload: dict) -> dict:
    resp = {
        "protocol": PROTOCOL_VERSION,
        "request_id": request["request_id"],
        "kind": request["kind"],
        "ok": True,
        "payload": payload,
    }
    validate_response(resp)
    return resp


def error_response(request: dict, code: str, message: str) -> dict:
    resp = {
        "protocol": PROTOCOL_VERSION,
        "request_id": request.get("request_id", "unknown"),
        "kind": request.get("kind", "health"),
        "ok": False,
        "error": {"code": code, "message": message},
    }
    validate_response(resp)
    return resp
