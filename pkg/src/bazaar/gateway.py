"""API gateway: authenticates, authorizes, throttles, meters, forwards.

Per-request pipeline, in fixed order: route match, bearer token
validation, subscription lookup, subscription status, operation scope,
throttle, quota, forward, meter. Denials short-circuit but still produce
exactly one usage record; a request that cannot be metered is answered
503 and never forwarded (billing integrity over availability).
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field

import requests

from . import tokens
from .control_plane import ControlPlaneClient
from .errors import BazaarError, NotFound, StorageFull
from .httpd import Request, Response

log = logging.getLogger("bazaar.gateway")

OUTCOMES = (
    "FORWARDED", "DENIED_AUTH", "DENIED_SCOPE", "DENIED_SUBSCRIPTION",
    "DENIED_THROTTLE", "DENIED_QUOTA", "BACKEND_ERROR",
)

_HOP_HEADERS = {"connection", "keep-alive", "transfer-encoding", "content-length",
                "host", "upgrade", "te", "trailer", "proxy-authorization"}
_RELAY_SKIP = {"connection", "keep-alive", "transfer-encoding", "content-length",
               "date", "server"}


# --- throttling -------------------------------------------------------------

@dataclass
class ThrottleState:
    rate: float            # tokens per second
    burst: float           # bucket capacity
    tokens: float          # current fill; starts full
    last_refill: float
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


def check_throttle(state: ThrottleState, now: float) -> bool:
    """Token bucket: refill by elapsed time, spend one token or deny."""
    with state.lock:
        state.tokens = min(state.burst, state.tokens + state.rate * (now - state.last_refill))
        state.last_refill = now
        if state.tokens >= 1.0:
            state.tokens -= 1.0
            return True
        return False


# --- quota ------------------------------------------------------------------

def quota_window_start(now: float, window: str) -> str:
    """UTC calendar window containing ``now``: HOUR, DAY or MONTH."""
    moment = dt.datetime.fromtimestamp(now, tz=dt.timezone.utc)
    if window == "HOUR":
        start = moment.replace(minute=0, second=0, microsecond=0)
    elif window == "DAY":
        start = moment.replace(hour=0, minute=0, second=0, microsecond=0)
    elif window == "MONTH":
        start = moment.replace(day=1, hour=0, minute=0, second=0, microsecond=0)
    else:
        raise ValueError(f"unknown quota window {window!r}")
    return start.strftime("%Y-%m-%dT%H:%M:%SZ")


class QuotaCounter:
    """Forwarded-call counts per window for one subscription."""

    def __init__(self):
        self.lock = threading.Lock()
        self.windows: dict[str, int] = {}

    def count(self, window_start: str) -> int:
        with self.lock:
            return self.windows.get(window_start, 0)

    def reserve(self, window_start: str, limit: int) -> bool:
        """Atomically claim one forwarded slot; False when the window is full."""
        with self.lock:
            current = self.windows.get(window_start, 0)
            if current >= limit:
                return False
            self.windows[window_start] = current + 1
            return True

    def release(self, window_start: str):
        with self.lock:
            current = self.windows.get(window_start, 0)
            if current > 0:
                self.windows[window_start] = current - 1


def check_quota(counter: QuotaCounter, plan: dict, now: float) -> bool:
    """Read-only admission check for QUOTA plans (no increment)."""
    window_start = quota_window_start(now, plan["quota_window"])
    return counter.count(window_start) < int(plan["quota_limit"])


# --- usage log --------------------------------------------------------------

RECORD_FIELDS = ("record_id", "sub_id", "api_id", "operation", "timestamp",
                 "outcome", "upstream_latency_ms", "request_bytes", "response_bytes")


def make_record(sub_id: str, api_id: str, operation: str, timestamp: float,
                outcome: str, upstream_latency_ms: float | None,
                request_bytes: int, response_bytes: int) -> dict:
    moment = dt.datetime.fromtimestamp(timestamp, tz=dt.timezone.utc)
    return {
        "record_id": uuid.uuid4().hex,
        "sub_id": sub_id,
        "api_id": api_id,
        "operation": operation,
        "timestamp": moment.strftime("%Y-%m-%dT%H:%M:%S.%fZ"),
        "outcome": outcome,
        "upstream_latency_ms": upstream_latency_ms,
        "request_bytes": request_bytes,
        "response_bytes": response_bytes,
    }


class UsageLog:
    """Write-ahead NDJSON appender with a bit-stable field order.

    The file is opened per append so a storage failure (e.g. the log made
    read-only) is observed immediately; ``ensure_writable`` is the
    pre-forward probe behind the fail-closed contract.
    """

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()

    def ensure_writable(self):
        with self._lock:
            try:
                with open(self.path, "a", encoding="utf-8"):
                    pass
            except OSError as exc:
                raise StorageFull(f"usage log not writable: {exc}") from exc

    def append(self, record: dict):
        line = json.dumps({name: record[name] for name in RECORD_FIELDS}) + "\n"
        with self._lock:
            try:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line)
                    fh.flush()
            except OSError as exc:
                raise StorageFull(f"usage log append failed: {exc}") from exc


# --- routing ----------------------------------------------------------------

@dataclass
class RouteEntry:
    context: str
    api_id: str
    backend_url: str
    operations: list[dict]
    lifecycle: str


class RouteTable:
    """Longest-prefix context matching over the routable catalog."""

    def __init__(self):
        self._entries: list[RouteEntry] = []
        self._lock = threading.Lock()

    def update(self, products: list[dict]):
        entries = [
            RouteEntry(
                context=p["context"],
                api_id=p["api_id"],
                backend_url=p["backend_url"].rstrip("/"),
                operations=p["operations"],
                lifecycle=p["lifecycle"],
            )
            for p in products
        ]
        entries.sort(key=lambda e: len(e.context), reverse=True)
        with self._lock:
            self._entries = entries

    def match(self, path: str) -> tuple[RouteEntry, str] | None:
        with self._lock:
            for entry in self._entries:
                if path == entry.context or path.startswith(entry.context + "/"):
                    remainder = path[len(entry.context):] or "/"
                    return entry, remainder
        return None


def match_operation(operations: list[dict], method: str, remainder: str) -> dict | None:
    """Match the sub-path against the product's operation templates."""
    parts = [p for p in remainder.split("/") if p != ""]
    for op in operations:
        if op["method"] != method:
            continue
        template = [p for p in op["path"].split("/") if p != ""]
        if len(template) != len(parts):
            continue
        if all(t.startswith("{") and t.endswith("}") or t == p
               for t, p in zip(template, parts)):
            return op
    return None


# --- the gateway itself -----------------------------------------------------

@dataclass
class GatewayConfig:
    control_plane_url: str
    usage_log_path: str
    keys: dict[str, bytes]
    gateway_id: str = "gw-main"
    skew: float = tokens.DEFAULT_SKEW
    lookup_ttl: float = 1.0
    catalog_poll_s: float = 5.0
    miss_refresh_min_s: float = 0.25
    upstream_timeout: float = 10.0


class Gateway:
    """The ingress app; ``handle`` is the whole per-request pipeline."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.control_plane = ControlPlaneClient(config.control_plane_url)
        self.routes = RouteTable()
        self.usage_log = UsageLog(config.usage_log_path)
        self._throttles: dict[str, ThrottleState] = {}
        self._quotas: dict[str, QuotaCounter] = {}
        self._state_lock = threading.Lock()
        self._lookup_cache: dict[tuple[str, str], tuple[float, object]] = {}
        self._cache_lock = threading.Lock()
        self._last_refresh = 0.0
        self._poller: threading.Thread | None = None
        self._stop = threading.Event()
        self._session = requests.Session()
        adapter = requests.adapters.HTTPAdapter(pool_connections=8, pool_maxsize=64)
        self._session.mount("http://", adapter)

    # --- lifecycle -------------------------------------------------------

    def start(self):
        self.refresh_routes()
        self._stop.clear()
        self._poller = threading.Thread(target=self._poll_loop, name="gw-catalog", daemon=True)
        self._poller.start()

    def stop(self):
        self._stop.set()
        if self._poller:
            self._poller.join(timeout=2)

    def _poll_loop(self):
        while not self._stop.wait(self.config.catalog_poll_s):
            try:
                self.refresh_routes()
            except Exception as exc:  # noqa: BLE001 - keep polling through outages
                log.warning("catalog refresh failed: %s", exc)

    def refresh_routes(self):
        products = self.control_plane.catalog(routable=True)
        self.routes.update(products)
        self._last_refresh = time.monotonic()

    # --- per-subscription state -------------------------------------------

    def _throttle_state(self, sub_id: str, plan: dict) -> ThrottleState:
        with self._state_lock:
            state = self._throttles.get(sub_id)
            if state is None:
                state = ThrottleState(
                    rate=float(plan["throttle_rate"]),
                    burst=float(plan["throttle_burst"]),
                    tokens=float(plan["throttle_burst"]),
                    last_refill=time.monotonic(),
                )
                self._throttles[sub_id] = state
            return state

    def _quota_counter(self, sub_id: str) -> QuotaCounter:
        with self._state_lock:
            counter = self._quotas.get(sub_id)
            if counter is None:
                counter = self._quotas[sub_id] = QuotaCounter()
            return counter

    def _lookup(self, consumer_key: str, context: str) -> dict:
        """Subscription lookup with a short TTL cache (<= 1 s staleness)."""
        cache_key = (consumer_key, context)
        now = time.monotonic()
        with self._cache_lock:
            hit = self._lookup_cache.get(cache_key)
            if hit and hit[0] > now:
                if isinstance(hit[1], BazaarError):
                    raise hit[1]
                return hit[1]
        try:
            view = self.control_plane.lookup_subscription(consumer_key, context)
        except BazaarError as exc:
            with self._cache_lock:
                self._lookup_cache[cache_key] = (now + self.config.lookup_ttl, exc)
            raise
        with self._cache_lock:
            self._lookup_cache[cache_key] = (now + self.config.lookup_ttl, view)
        return view

    # --- pipeline ----------------------------------------------------------

    def handle(self, request: Request) -> Response:
        received_at = time.time()
        ctx = {
            "sub_id": "-", "api_id": "-",
            "operation": f"{request.method} {request.path}",
            "request_bytes": len(request.body),
            "latency_ms": None,
        }

        route = self.routes.match(request.path)
        if route is None and self._miss_refresh():
            route = self.routes.match(request.path)
        if route is None:
            return self._deny(ctx, received_at, 404, "NO_ROUTE", "DENIED_AUTH",
                              f"no API at {request.path}")
        entry, remainder = route
        ctx["api_id"] = entry.api_id

        op = match_operation(entry.operations, request.method, remainder)
        if op is None:
            return self._deny(ctx, received_at, 404, "NO_ROUTE", "DENIED_AUTH",
                              f"no operation {request.method} {remainder}")
        ctx["operation"] = f"{op['method']} {op['path']}"

        auth = request.header("authorization", "")
        if not auth.startswith("Bearer "):
            return self._deny(ctx, received_at, 401, "TOKEN_MISSING", "DENIED_AUTH",
                              "Authorization: Bearer token required",
                              headers={"WWW-Authenticate": "Bearer"})
        try:
            claims = tokens.validate_token(auth[len("Bearer "):].strip(), self.config.keys,
                                           expected_audience=self.config.gateway_id,
                                           skew=self.config.skew)
        except BazaarError as exc:
            return self._deny(ctx, received_at, 401, "TOKEN_INVALID", "DENIED_AUTH",
                              f"{exc.code}: {exc.message}",
                              headers={"WWW-Authenticate": "Bearer"})

        try:
            view = self._lookup(claims.get("azp", ""), entry.context)
        except NotFound as exc:
            return self._deny(ctx, received_at, 403, "NO_SUBSCRIPTION", "DENIED_AUTH",
                              exc.message)
        except BazaarError as exc:
            log.warning("subscription lookup failed: %s", exc)
            return self._deny(ctx, received_at, 503, "LOOKUP_UNAVAILABLE", "DENIED_AUTH",
                              "control plane unreachable")
        ctx["sub_id"] = view["sub_id"]

        if view["status"] != "ACTIVE":
            return self._deny(ctx, received_at, 403, "SUBSCRIPTION_INACTIVE",
                              "DENIED_SUBSCRIPTION", f"subscription is {view['status']}")

        token_scopes = set(claims.get("scope", "").split())
        if op["required_scope"] not in token_scopes:
            return self._deny(ctx, received_at, 403, "SCOPE_DENIED", "DENIED_SCOPE",
                              f"operation requires scope {op['required_scope']!r}")

        plan = view["plan"]
        if float(plan.get("throttle_rate", 0)) > 0:
            state = self._throttle_state(view["sub_id"], plan)
            if not check_throttle(state, time.monotonic()):
                return self._deny(ctx, received_at, 429, "RATE_LIMITED", "DENIED_THROTTLE",
                                  "request rate over plan throttle")

        reservation = None
        if plan["kind"] == "QUOTA":
            counter = self._quota_counter(view["sub_id"])
            window_start = quota_window_start(received_at, plan["quota_window"])
            if not counter.reserve(window_start, int(plan["quota_limit"])):
                return self._deny(ctx, received_at, 429, "QUOTA_EXCEEDED", "DENIED_QUOTA",
                                  f"quota of {plan['quota_limit']} per {plan['quota_window']} exhausted")
            reservation = (counter, window_start)

        # fail-closed: prove the meter works before touching the backend
        try:
            self.usage_log.ensure_writable()
        except StorageFull:
            if reservation:
                reservation[0].release(reservation[1])
            return Response.json({"error": "METERING_UNAVAILABLE",
                                  "message": "usage log not writable"}, status=503)

        response, outcome, latency_ms = self._forward(request, entry, remainder,
                                                      view["sub_id"])
        ctx["latency_ms"] = latency_ms
        if outcome != "FORWARDED" and reservation:
            reservation[0].release(reservation[1])

        record = make_record(ctx["sub_id"], ctx["api_id"], ctx["operation"], received_at,
                             outcome, latency_ms, ctx["request_bytes"], len(response.body))
        try:
            self.usage_log.append(record)
        except StorageFull:
            return Response.json({"error": "METERING_UNAVAILABLE",
                                  "message": "usage log append failed"}, status=503)
        return response

    def _miss_refresh(self) -> bool:
        if time.monotonic() - self._last_refresh < self.config.miss_refresh_min_s:
            return False
        try:
            self.refresh_routes()
            return True
        except Exception as exc:  # noqa: BLE001
            log.warning("route refresh on miss failed: %s", exc)
            return False

    def _deny(self, ctx: dict, received_at: float, status: int, code: str,
              outcome: str, message: str, headers: dict | None = None) -> Response:
        response = Response.json({"error": code, "message": message},
                                 status=status, headers=headers)
        record = make_record(ctx["sub_id"], ctx["api_id"], ctx["operation"], received_at,
                             outcome, ctx["latency_ms"], ctx["request_bytes"],
                             len(response.body))
        try:
            self.usage_log.append(record)
        except StorageFull:
            return Response.json({"error": "METERING_UNAVAILABLE",
                                  "message": "usage log append failed"}, status=503)
        return response

    def _forward(self, request: Request, entry: RouteEntry, remainder: str,
                 sub_id: str) -> tuple[Response, str, float]:
        url = entry.backend_url + remainder
        if request.raw_query:
            url += "?" + request.raw_query
        upstream_headers = {
            name: value for name, value in request.headers.items()
            if name not in _HOP_HEADERS and name != "authorization"
        }
        upstream_headers["X-Request-Id"] = uuid.uuid4().hex
        upstream_headers["X-Sub-Id"] = sub_id
        start = time.perf_counter()
        try:
            upstream = self._session.request(
                request.method, url, headers=upstream_headers,
                data=request.body or None, timeout=self.config.upstream_timeout,
                allow_redirects=False,
            )
        except requests.RequestException as exc:
            latency_ms = round((time.perf_counter() - start) * 1000, 3)
            response = Response.json({"error": "BACKEND_UNREACHABLE", "message": str(exc)},
                                     status=502)
            return response, "BACKEND_ERROR", latency_ms
        latency_ms = round((time.perf_counter() - start) * 1000, 3)
        headers = {name: value for name, value in upstream.headers.items()
                   if name.lower() not in _RELAY_SKIP}
        response = Response(status=upstream.status_code, body=upstream.content, headers=headers)
        return response, "FORWARDED", latency_ms
