"""Backend endpoint descriptors and transports.

Three neural stages sit behind the wire protocol: a promptable video
segmenter, a monocular depth estimator, and a video outpainter. Each is
described by an endpoint spec and reached through one of three transports:

- ``http``: request JSON POSTed to ``address``
- ``subprocess``: ``command`` is spawned once and spoken to over
  newline-delimited JSON on stdin/stdout
- ``mock``: in-process deterministic test double built from a synthetic
  scene directory (see ``tabe.mocks``)

A ``backends.json`` file maps the three roles to specs::

    {
      "segmenter":       {"kind": "http", "address": "http://host:9090/rpc",
                          "timeout": 120},
      "depth_estimator": {"kind": "subprocess",
                          "command": ["python3", "-m", "my_depth_adapter"]},
      "outpainter":      {"kind": "mock", "scene": "scenes/demo",
                          "mode": "oracle", "seed": 7}
    }
"""

from __future__ import annotations

import itertools
import json
import queue
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from . import protocol
from .core import BackendError, ConfigError

ROLES = ("segmenter", "depth_estimator", "outpainter")


@dataclass(frozen=True)
class EndpointSpec:
    kind: str
    address: str | None = None
    command: tuple[str, ...] | None = None
    timeout: float = 60.0
    # mock-only knobs
    scene: str | None = None
    mode: str = "oracle"
    seed: int = 0
    flip_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("http", "subprocess", "mock"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.address:
            raise ConfigError("http backend needs an 'address'")
        if self.kind == "subprocess" and not self.command:
            raise ConfigError("subprocess backend needs a 'command'")
        if self.kind == "mock" and not self.scene:
            raise ConfigError("mock backend needs a 'scene' directory")

    @classmethod
    def from_json(cls, obj: dict) -> "EndpointSpec":
        command = obj.get("command")
        if isinstance(command, str):
            command = tuple(command.split())
        elif command is not None:
            command = tuple(command)
        return cls(
            kind=obj.get("kind", ""),
            address=obj.get("address"),
            command=command,
            timeout=float(obj.get("timeout", 60.0)),
            scene=obj.get("scene"),
            mode=obj.get("mode", "oracle"),
            seed=int(obj.get("seed", 0)),
            flip_rate=float(obj.get("flip_rate", 0.0)),
        )


@dataclass(frozen=True)
class BackendEndpoints:
    segmenter: EndpointSpec
    depth_estimator: EndpointSpec
    outpainter: EndpointSpec

    def spec(self, role: str) -> EndpointSpec:
        return getattr(self, role)


def load_backends(path: str | Path) -> BackendEndpoints:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"backends file not found: {path}")
    obj = json.loads(path.read_text())
    missing = [r for r in ROLES if r not in obj]
    if missing:
        raise ConfigError(f"backends file {path} is missing roles: {missing}")
    specs = {}
    for role in ROLES:
        spec = EndpointSpec.from_json(obj[role])
        if spec.kind == "mock" and spec.scene and not Path(spec.scene).is_absolute():
            spec = EndpointSpec(
                kind="mock",
                timeout=spec.timeout,
                scene=str((path.parent / spec.scene).resolve()),
                mode=spec.mode,
                seed=spec.seed,
                flip_rate=spec.flip_rate,
            )
        specs[role] = spec
    return BackendEndpoints(**specs)


class BackendClient:
    """One connected backend; issues protocol requests and checks replies."""

    def __init__(self, role: str, transport, timeout: float):
        self.role = role
        self._transport = transport
        self._timeout = timeout
        self._ids = itertools.count()
        self._lock = threading.Lock()

    def _next_id(self, kind: str) -> str:
        with self._lock:
            return f"{self.role}-{kind}-{next(self._ids):04d}"

    def request(self, kind: str, payload: dict, root: str | Path) -> dict:
        req = protocol.make_request(kind, payload, str(root), self._next_id(kind))
        try:
            resp = self._transport.call(req, self._timeout)
        except BackendError:
            raise
        except Exception as exc:
            raise BackendError(f"{self.role}: transport failure: {exc}") from exc
        protocol.validate_response(resp, expected=req)
        if not resp["ok"]:
            err = resp["error"]
            raise BackendError(f"{self.role}: {err['code']}: {err['message']}")
        return resp["payload"]

    def health_check(self, root: str | Path) -> dict:
        return self.request("health", {}, root)

    def close(self) -> None:
        close = getattr(self._transport, "close", None)
        if close:
            close()


class InprocTransport:
    """Wraps a handler callable; used by mock backends and tests."""

    def __init__(self, handler):
        self._handler = handler

    def call(self, request: dict, timeout: float) -> dict:
        return self._handler(request)


class HttpTransport:
    def __init__(self, address: str, client: httpx.Client | None = None):
        self._address = address
        self._client = client or httpx.Client()

    def call(self, request: dict, timeout: float) -> dict:
        try:
            resp = self._client.post(self._address, json=request, timeout=timeout)
        except httpx.TimeoutException as exc:
            raise BackendError(f"http backend timed out after {timeout}s") from exc
        except httpx.HTTPError as exc:
            raise BackendError(f"http backend unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"http backend returned status {resp.status_code}")
        return resp.json()

    def close(self) -> None:
        self._client.close()


class SubprocessTransport:
    """Long-running child process speaking NDJSON on its pipes.

    A dedicated reader thread feeds a queue so per-request timeouts work
    without platform-specific nonblocking IO. One request is in flight at
    a time (calls are serialized by a lock).
    """

    def __init__(self, command: tuple[str, ...]):
        self._command = command
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendError(f"cannot spawn backend {command!r}: {exc}") from exc
        self._queue: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        for line in self._proc.stdout:
            self._queue.put(line)
        self._queue.put(None)  # EOF marker

    def call(self, request: dict, timeout: float) -> dict:
        with self._lock:
            if self._proc.poll() is not None:
                raise BackendError(
                    f"backend process exited with code {self._proc.returncode}"
                )
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
            try:
                line = self._queue.get(timeout=timeout)
            except queue.Empty:
                raise BackendError(
                    f"backend {self._command!r} timed out after {timeout}s"
                ) from None
            if line is None:
                raise BackendError(f"backend {self._command!r} closed its pipe")
            try:
                return json.loads(line)
            except json.JSONDecodeError as exc:
                raise BackendError(f"backend sent invalid JSON: {line[:200]!r}") from exc

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()


def connect(role: str, spec: EndpointSpec) -> BackendClient:
    if spec.kind == "http":
        transport = HttpTransport(spec.address)
    elif spec.kind == "subprocess":
        transport = SubprocessTransport(spec.command)
    else:
        from .mocks import MockModelBackend  # deferred: mocks pull in synth

        handler = MockModelBackend(
            scene_dir=spec.scene, mode=spec.mode, seed=spec.seed, flip_rate=spec.flip_rate
        )
        transport = InprocTransport(handler.handle)
    return BackendClient(role, transport, spec.timeout)


@dataclass
class ConnectedBackends:
    segmenter: BackendClient
    depth_estimator: BackendClient
    outpainter: BackendClient
    _all: tuple[BackendClient, ...] = field(init=False)

    def __post_init__(self):
        self._all = (self.segmenter, self.depth_estimator, self.outpainter)

    def health_check(self, root: str | Path) -> None:
        for client in self._all:
            try:
                client.health_check(root)
            except BackendError as exc:
                raise BackendError(f"health check failed for {client.role}: {exc}") from exc

    def close(self) -> None:
        for client in self._all:
            client.close()

    def __enter__(self) -> "ConnectedBackends":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def connect_all(endpoints: BackendEndpoints) -> ConnectedBackends:
    return ConnectedBackends(**{role: connect(role, endpoints.spec(role)) for role in ROLES})
