"""ezp/1 wire protocol: newline-delimited UTF-8 JSON messages over TCP or a
stdio pipe.

Every request gets exactly one response echoing its id — malformed frames
included, which get an ``error`` response.  The handshake exchanges the
protocol version and backend kind; a version mismatch is a hard error.
"""

from __future__ import annotations

import base64
import json
import socket
import socketserver
import subprocess
import threading
from typing import Any, BinaryIO, Mapping, Optional

from .errors import (
    ExecutorError,
    ExecutorUnreachable,
    PortInUse,
    ProtocolError,
    RenderFailed,
)
from .model import CodeSnippet, ValidationReport
from .simscene import (
    DEFAULT_RESOLUTION,
    ExecutorSession,
    MockExecutor,
    RenderResult,
    SceneManifest,
)

PROTOCOL_VERSION = "ezp/1"
DEFAULT_PORT = 7045

KINDS = ("hello", "validate", "execute", "render", "introspect", "error")

_ERROR_CLASSES = {
    "render-failed": RenderFailed,
    "version-mismatch": ProtocolError,
    "bad-request": ProtocolError,
    "internal": ExecutorError,
}


def encode_message(msg_id: Optional[int], kind: str, payload: Mapping[str, Any]) -> bytes:
    return (json.dumps({"id": msg_id, "kind": kind, "payload": dict(payload)},
                       separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def _error_payload(code: str, message: str) -> dict:
    return {"code": code, "message": message}


class _RequestHandlerCore:
    """Kind dispatch shared by the TCP and stdio servers."""

    def __init__(self, executor: MockExecutor):
        self.executor = executor

    def handle_line(self, line: bytes) -> bytes:
        msg_id: Optional[int] = None
        try:
            obj = json.loads(line.decode("utf-8"))
            if not isinstance(obj, dict):
                raise ValueError("message must be a JSON object")
            raw_id = obj.get("id")
            if isinstance(raw_id, int) and not isinstance(raw_id, bool):
                msg_id = raw_id
            kind = obj.get("kind")
            payload = obj.get("payload") or {}
            if not isinstance(payload, dict):
                raise ValueError("payload must be a JSON object")
        except (ValueError, UnicodeDecodeError) as exc:
            return encode_message(msg_id, "error",
                                  _error_payload("bad-request", f"malformed frame: {exc}"))
        if kind not in KINDS or kind == "error":
            return encode_message(msg_id, "error",
                                  _error_payload("bad-request", f"unknown kind {kind!r}"))
        try:
            result = self._dispatch(kind, payload)
        except RenderFailed as exc:
            return encode_message(msg_id, "error", _error_payload("render-failed", str(exc)))
        except ProtocolError as exc:
            return encode_message(msg_id, "error", _error_payload("version-mismatch", str(exc)))
        except Exception as exc:  # noqa: BLE001 - totality: always answer
            return encode_message(msg_id, "error", _error_payload("internal", str(exc)))
        return encode_message(msg_id, kind, result)

    def _dispatch(self, kind: str, payload: dict) -> dict:
        if kind == "hello":
            version = payload.get("version")
            if version != PROTOCOL_VERSION:
                raise ProtocolError(
                    f"protocol version mismatch: got {version!r}, need {PROTOCOL_VERSION!r}")
            return {"version": PROTOCOL_VERSION, "backend": self.executor.backend_kind}
        if kind == "validate":
            snippet = CodeSnippet.from_dict(payload["script"])
            return {"report": self.executor.validate(snippet).to_dict()}
        if kind == "execute":
            snippet = CodeSnippet.from_dict(payload["script"])
            report, version = self.executor.execute(snippet)
            return {"report": report.to_dict(), "state_version": version}
        if kind == "render":
            result = self.executor.render(
                view_index=int(payload.get("view_index", 0)),
                resolution=tuple(payload.get("resolution", DEFAULT_RESOLUTION)),
                meta=payload.get("meta") or {},
                force_failure=bool(payload.get("force_failure", False)),
            )
            return {"handle_id": result.handle_id,
                    "media_type": result.media_type,
                    "data_b64": base64.b64encode(result.data).decode("ascii"),
                    "render_micros": result.render_micros,
                    "meta": dict(result.meta)}
        if kind == "introspect":
            return {"manifest": self.executor.introspect().to_dict()}
        raise ProtocolError(f"unhandled kind {kind!r}")


class ProtocolServer:
    """Threaded TCP server exposing one executor to any number of clients."""

    def __init__(self, executor: MockExecutor, host: str = "127.0.0.1",
                 port: int = DEFAULT_PORT):
        core = _RequestHandlerCore(executor)

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                while True:
                    line = self.rfile.readline()
                    if not line:
                        return
                    if not line.strip():
                        continue
                    try:
                        self.wfile.write(core.handle_line(line))
                        self.wfile.flush()
                    except (BrokenPipeError, ConnectionResetError):
                        return

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        try:
            self._server = Server((host, port), Handler)
        except OSError as exc:
            raise PortInUse(f"cannot bind {host}:{port}: {exc}") from exc
        self.host, self.port = self._server.server_address
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="ezp-server", daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve_stdio(executor: MockExecutor, stdin: BinaryIO, stdout: BinaryIO) -> None:
    """Serve the protocol over a stdio pipe until EOF."""
    core = _RequestHandlerCore(executor)
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(core.handle_line(line))
        stdout.flush()


class _Transport:
    def send_line(self, data: bytes) -> None:
        raise NotImplementedError

    def recv_line(self) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass


class TcpTransport(_Transport):
    def __init__(self, host: str, port: int, timeout_s: float = 30.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout_s)
        except OSError as exc:
            raise ExecutorUnreachable(f"cannot connect to {host}:{port}: {exc}") from exc
        self._reader = self._sock.makefile("rb")

    def send_line(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise ExecutorUnreachable(f"transport lost: {exc}") from exc

    def recv_line(self) -> bytes:
        try:
            line = self._reader.readline()
        except OSError as exc:
            raise ExecutorUnreachable(f"transport lost: {exc}") from exc
        if not line:
            raise ExecutorUnreachable("backend closed the connection")
        return line

    def close(self) -> None:
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass


class StdioTransport(_Transport):
    """Child-process transport: spawns the backend and pipes frames."""

    def __init__(self, argv: list[str]):
        try:
            self._proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                          stdout=subprocess.PIPE)
        except OSError as exc:
            raise ExecutorUnreachable(f"cannot spawn backend {argv!r}: {exc}") from exc

    def send_line(self, data: bytes) -> None:
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise ExecutorUnreachable(f"backend pipe lost: {exc}") from exc

    def recv_line(self) -> bytes:
        assert self._proc.stdout is not None
        line = self._proc.stdout.readline()
        if not line:
            raise ExecutorUnreachable("backend process closed its pipe")
        return line

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.terminate()
        self._proc.wait(timeout=5)


class RemoteExecutor(ExecutorSession):
    """ExecutorSession speaking ezp/1 to a remote backend.

    One request in flight per connection; the backend serializes mutations.
    """

    def __init__(self, transport: _Transport):
        self._transport = transport
        self._lock = threading.Lock()
        self._next_id = 0
        self.backend_kind = "unknown"
        hello = self._call("hello", {"version": PROTOCOL_VERSION})
        if hello.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"backend speaks {hello.get('version')!r}, "
                                f"need {PROTOCOL_VERSION!r}")
        self.backend_kind = hello.get("backend", "unknown")

    @classmethod
    def connect_tcp(cls, host: str = "127.0.0.1", port: int = DEFAULT_PORT) -> "RemoteExecutor":
        return cls(TcpTransport(host, port))

    @classmethod
    def spawn_stdio(cls, argv: list[str]) -> "RemoteExecutor":
        return cls(StdioTransport(argv))

    def _call(self, kind: str, payload: Mapping[str, Any]) -> dict:
        with self._lock:
            self._next_id += 1
            msg_id = self._next_id
            self._transport.send_line(encode_message(msg_id, kind, payload))
            line = self._transport.recv_line()
        try:
            obj = json.loads(line.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise ProtocolError(f"unparseable response frame: {exc}") from exc
        if obj.get("id") != msg_id:
            raise ProtocolError(f"response id {obj.get('id')} does not match request {msg_id}")
        if obj.get("kind") == "error":
            payload = obj.get("payload") or {}
            exc_cls = _ERROR_CLASSES.get(payload.get("code"), ExecutorError)
            raise exc_cls(payload.get("message", "backend error"))
        return obj.get("payload") or {}

    def validate(self, snippet: CodeSnippet) -> ValidationReport:
        payload = self._call("validate", {"script": snippet.to_dict()})
        return ValidationReport.from_dict(payload["report"])

    def execute(self, snippet: CodeSnippet) -> tuple[ValidationReport, int]:
        payload = self._call("execute", {"script": snippet.to_dict()})
        return ValidationReport.from_dict(payload["report"]), int(payload["state_version"])

    def render(self, view_index: int = 0, resolution: tuple[int, int] = DEFAULT_RESOLUTION,
               meta: Optional[Mapping[str, str]] = None,
               force_failure: bool = False) -> RenderResult:
        payload = self._call("render", {"view_index": view_index,
                                        "resolution": list(resolution),
                                        "meta": dict(meta or {}),
                                        "force_failure": force_failure})
        return RenderResult(handle_id=payload["handle_id"],
                            media_type=payload["media_type"],
                            data=base64.b64decode(payload["data_b64"]),
                            render_micros=int(payload["render_micros"]),
                            meta=payload.get("meta") or {})

    def introspect(self) -> SceneManifest:
        payload = self._call("introspect", {})
        return SceneManifest.from_dict(payload["manifest"])

    def close(self) -> None:
        self._transport.close()
