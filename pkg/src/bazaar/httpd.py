"""Minimal threaded HTTP plumbing shared by all services.

Every service exposes ``handle(Request) -> Response``; this module turns
that callable into a loopback HTTP/1.1 server (one thread per connection,
keep-alive on). Keeping the socket layer out of the services makes the
pipelines directly callable from tests.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import urllib.parse
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import BazaarError, NotFound

log = logging.getLogger("bazaar.httpd")


@dataclass
class Request:
    method: str
    path: str                      # path only, no query string
    query: dict = field(default_factory=dict)   # first value per key
    headers: dict = field(default_factory=dict)  # lower-cased keys
    body: bytes = b""
    params: dict = field(default_factory=dict)  # filled by Router
    raw_query: str = ""            # untouched query string, for proxying

    def json(self):
        if not self.body:
            return {}
        try:
            return json.loads(self.body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BazaarError(f"invalid JSON body: {exc}") from exc

    def form(self) -> dict:
        parsed = urllib.parse.parse_qs(self.body.decode("utf-8"), keep_blank_values=True)
        return {k: v[0] for k, v in parsed.items()}

    def header(self, name: str, default: str | None = None):
        return self.headers.get(name.lower(), default)


@dataclass
class Response:
    status: int = 200
    body: bytes = b""
    headers: dict = field(default_factory=dict)

    @classmethod
    def json(cls, payload, status: int = 200, headers: dict | None = None) -> "Response":
        body = json.dumps(payload).encode("utf-8")
        hdrs = {"Content-Type": "application/json"}
        if headers:
            hdrs.update(headers)
        return cls(status=status, body=body, headers=hdrs)

    @classmethod
    def from_error(cls, exc: BazaarError) -> "Response":
        return cls.json(exc.to_json(), status=exc.http_status)

    @classmethod
    def no_content(cls) -> "Response":
        return cls(status=204)


class Router:
    """Method + path-template dispatcher: ``/admin/apis/{id}/plans``."""

    def __init__(self):
        self._routes: list[tuple[str, re.Pattern, object]] = []

    def add(self, method: str, pattern: str, fn):
        regex = re.compile(
            "^" + re.sub(r"\{(\w+)\}", r"(?P<\1>[^/]+)", pattern) + "$"
        )
        self._routes.append((method.upper(), regex, fn))

    def route(self, method: str, pattern: str):
        def deco(fn):
            self.add(method, pattern, fn)
            return fn
        return deco

    def handle(self, request: Request) -> Response:
        for method, regex, fn in self._routes:
            if method != request.method:
                continue
            match = regex.match(request.path)
            if match:
                request.params = {
                    k: urllib.parse.unquote(v) for k, v in match.groupdict().items()
                }
                try:
                    return fn(request)
                except BazaarError as exc:
                    return Response.from_error(exc)
        return Response.from_error(NotFound(f"no route for {request.method} {request.path}"))


_CORS_HEADERS = {
    "Access-Control-Allow-Origin": "*",
    "Access-Control-Allow-Methods": "GET, POST, PUT, DELETE, OPTIONS",
    "Access-Control-Allow-Headers": "Authorization, Content-Type",
}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True  # loopback latency, not throughput
    app = None  # injected per server class

    def log_message(self, fmt, *args):  # route access logs away from stderr
        log.debug("%s %s", self.address_string(), fmt % args)

    def _dispatch(self):
        parsed = urllib.parse.urlsplit(self.path)
        query = {k: v[0] for k, v in urllib.parse.parse_qs(parsed.query).items()}
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        request = Request(
            method=self.command,
            path=urllib.parse.unquote(parsed.path),
            query=query,
            headers={k.lower(): v for k, v in self.headers.items()},
            body=body,
            raw_query=parsed.query,
        )
        if self.command == "OPTIONS":
            response = Response(status=204)
        else:
            try:
                response = self.app.handle(request)
            except BazaarError as exc:
                response = Response.from_error(exc)
            except Exception:  # noqa: BLE001 - never kill the worker thread
                log.exception("unhandled error for %s %s", self.command, self.path)
                response = Response.json({"error": "INTERNAL", "message": "internal error"}, 500)
        self.send_response(response.status)
        for name, value in {**_CORS_HEADERS, **response.headers}.items():
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(response.body)))
        self.end_headers()
        if self.command != "HEAD" and response.body:
            self.wfile.write(response.body)

    do_GET = do_POST = do_PUT = do_DELETE = do_OPTIONS = do_HEAD = _dispatch


class _FnApp:
    def __init__(self, fn):
        self.handle = fn


class HttpServer:
    """Runs an app's ``handle`` on a loopback port (0 picks a free one).

    ``app`` is anything with a ``handle(Request) -> Response`` method, or a
    bare callable with that signature.
    """

    def __init__(self, app, host: str = "127.0.0.1", port: int = 0, name: str = "svc"):
        if not hasattr(app, "handle") and callable(app):
            app = _FnApp(app)
        handler = type(f"{name}Handler", (_Handler,), {"app": app})
        self._server = ThreadingHTTPServer((host, port), handler)
        self._server.daemon_threads = True
        self._thread: threading.Thread | None = None
        self.host = host
        self.name = name

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "HttpServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, name=f"http-{self.name}", daemon=True
        )
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
