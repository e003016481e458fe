"""Control plane: registry and lifecycle for products, plans, apps, subscriptions.

All mutations funnel through one writer lock and are persisted as an
append-only event log (NDJSON) replayed at startup; ``path=None`` keeps
everything in memory for tests. Reads (catalog, subscription lookup) are
safe from any number of gateway workers.
"""

from __future__ import annotations

import hashlib
import json
import logging
import secrets
import threading
import time
from dataclasses import dataclass, field

import requests

from . import errors, money
from .errors import (
    AlreadyRevoked,
    AlreadySubscribed,
    BadCredentials,
    BazaarError,
    ContextConflict,
    IllegalTransition,
    InvalidDescriptor,
    InvalidName,
    InvalidPlan,
    NotFound,
    NotPublished,
    ScopeNotGranted,
)
from .httpd import Request, Response, Router

log = logging.getLogger("bazaar.control_plane")

LIFECYCLE_ORDER = ["CREATED", "PUBLISHED", "DEPRECATED", "RETIRED"]
ROUTABLE_STATES = {"PUBLISHED", "DEPRECATED"}
PLAN_KINDS = {"FLAT_FEE", "PAY_PER_USE", "QUOTA", "SLA_TIERED"}
QUOTA_WINDOWS = {"HOUR", "DAY", "MONTH"}
HTTP_METHODS = {"GET", "POST", "PUT", "DELETE", "PATCH", "HEAD"}


def _now_iso() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()) + "Z"


def _new_id(prefix: str) -> str:
    return f"{prefix}_{secrets.token_hex(6)}"


def _hash_secret(secret: str) -> str:
    return hashlib.sha256(secret.encode("utf-8")).hexdigest()


@dataclass
class Operation:
    method: str
    path: str
    required_scope: str

    def to_json(self) -> dict:
        return {"method": self.method, "path": self.path, "required_scope": self.required_scope}

    @classmethod
    def from_json(cls, data) -> "Operation":
        if isinstance(data, (list, tuple)) and len(data) == 3:
            method, path, scope = data
        elif isinstance(data, dict):
            method, path, scope = data.get("method"), data.get("path"), data.get("required_scope")
        else:
            raise InvalidDescriptor(f"operation must be [method, path, scope] or object: {data!r}")
        if not isinstance(method, str) or method.upper() not in HTTP_METHODS:
            raise InvalidDescriptor(f"unknown HTTP method {method!r}")
        if not isinstance(path, str) or not path.startswith("/"):
            raise InvalidDescriptor(f"operation path must start with '/': {path!r}")
        if not isinstance(scope, str) or not scope or any(c.isspace() for c in scope):
            raise InvalidDescriptor(f"required_scope must be a non-empty token: {scope!r}")
        return cls(method=method.upper(), path=path, required_scope=scope)


@dataclass
class ApiProduct:
    api_id: str
    name: str
    version: str
    context: str
    backend_url: str
    operations: list[Operation]
    lifecycle: str = "CREATED"

    @property
    def scopes(self) -> set[str]:
        return {op.required_scope for op in self.operations}

    def to_json(self) -> dict:
        return {
            "api_id": self.api_id,
            "name": self.name,
            "version": self.version,
            "context": self.context,
            "backend_url": self.backend_url,
            "operations": [op.to_json() for op in self.operations],
            "lifecycle": self.lifecycle,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ApiProduct":
        return cls(
            api_id=data["api_id"],
            name=data["name"],
            version=data["version"],
            context=data["context"],
            backend_url=data["backend_url"],
            operations=[Operation.from_json(op) for op in data["operations"]],
            lifecycle=data.get("lifecycle", "CREATED"),
        )


@dataclass
class MonetizationPlan:
    plan_id: str
    api_id: str
    kind: str
    flat_fee_micro: int = 0
    unit_rate_micro: int = 0
    quota_limit: int = 0
    quota_window: str = "MONTH"
    throttle_rate: float = 0.0
    throttle_burst: int = 0
    sla_latency_ms: float = 0.0
    sla_percentile: float = 0.0
    sla_credit_fraction: float = 0.0

    @property
    def throttled(self) -> bool:
        return self.throttle_rate > 0

    def to_json(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "api_id": self.api_id,
            "kind": self.kind,
            "flat_fee": money.format_micro(self.flat_fee_micro),
            "flat_fee_micro": self.flat_fee_micro,
            "unit_rate": money.format_micro(self.unit_rate_micro),
            "unit_rate_micro": self.unit_rate_micro,
            "quota_limit": self.quota_limit,
            "quota_window": self.quota_window,
            "throttle_rate": self.throttle_rate,
            "throttle_burst": self.throttle_burst,
            "sla_latency_ms": self.sla_latency_ms,
            "sla_percentile": self.sla_percentile,
            "sla_credit_fraction": self.sla_credit_fraction,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MonetizationPlan":
        return cls(
            plan_id=data["plan_id"],
            api_id=data["api_id"],
            kind=data["kind"],
            flat_fee_micro=int(data.get("flat_fee_micro", 0)),
            unit_rate_micro=int(data.get("unit_rate_micro", 0)),
            quota_limit=int(data.get("quota_limit", 0)),
            quota_window=data.get("quota_window", "MONTH"),
            throttle_rate=float(data.get("throttle_rate", 0.0)),
            throttle_burst=int(data.get("throttle_burst", 0)),
            sla_latency_ms=float(data.get("sla_latency_ms", 0.0)),
            sla_percentile=float(data.get("sla_percentile", 0.0)),
            sla_credit_fraction=float(data.get("sla_credit_fraction", 0.0)),
        )


@dataclass
class Application:
    app_id: str
    name: str
    consumer_key: str
    secret_hash: str  # sha256 hex; the plaintext secret is shown once only

    def to_json(self, include_hash: bool = False) -> dict:
        data = {"app_id": self.app_id, "name": self.name, "consumer_key": self.consumer_key}
        if include_hash:
            data["secret_hash"] = self.secret_hash
        return data


@dataclass
class Subscription:
    sub_id: str
    app_id: str
    api_id: str
    plan_id: str
    status: str = "ACTIVE"
    created_at: str = field(default_factory=_now_iso)
    granted_scopes: set[str] = field(default_factory=set)

    def to_json(self) -> dict:
        return {
            "sub_id": self.sub_id,
            "app_id": self.app_id,
            "api_id": self.api_id,
            "plan_id": self.plan_id,
            "status": self.status,
            "created_at": self.created_at,
            "granted_scopes": sorted(self.granted_scopes),
        }


def _parse_plan_spec(api_id: str, spec: dict) -> MonetizationPlan:
    kind = spec.get("kind")
    if kind not in PLAN_KINDS:
        raise InvalidPlan(f"kind must be one of {sorted(PLAN_KINDS)}, got {kind!r}")

    def micro(name: str) -> int:
        raw = spec.get(name, 0)
        try:
            value = money.to_micro(raw)
        except (ValueError, ArithmeticError) as exc:
            raise InvalidPlan(f"{name} is not an amount: {raw!r}") from exc
        if value < 0:
            raise InvalidPlan(f"{name} must be >= 0")
        return value

    plan = MonetizationPlan(
        plan_id=_new_id("plan"),
        api_id=api_id,
        kind=kind,
        flat_fee_micro=micro("flat_fee"),
        unit_rate_micro=micro("unit_rate"),
        quota_limit=int(spec.get("quota_limit", 0)),
        quota_window=spec.get("quota_window", "MONTH"),
        throttle_rate=float(spec.get("throttle_rate", 0.0)),
        throttle_burst=int(spec.get("throttle_burst", 0)),
        sla_latency_ms=float(spec.get("sla_latency_ms", 0.0)),
        sla_percentile=float(spec.get("sla_percentile", 0.0)),
        sla_credit_fraction=float(spec.get("sla_credit_fraction", 0.0)),
    )
    if plan.throttle_rate < 0:
        raise InvalidPlan("throttle_rate must be >= 0")
    if plan.throttled and plan.throttle_burst < 1:
        raise InvalidPlan("throttle_burst must be >= 1 when throttling is enabled")
    if plan.quota_limit < 0:
        raise InvalidPlan("quota_limit must be >= 0")
    if kind == "QUOTA":
        if plan.quota_limit < 1:
            raise InvalidPlan("QUOTA plans require quota_limit >= 1")
        if plan.quota_window not in QUOTA_WINDOWS:
            raise InvalidPlan(f"quota_window must be one of {sorted(QUOTA_WINDOWS)}")
    if kind == "SLA_TIERED":
        if plan.sla_latency_ms <= 0:
            raise InvalidPlan("SLA_TIERED plans require sla_latency_ms > 0")
        if not 0 < plan.sla_percentile <= 1:
            raise InvalidPlan("sla_percentile must be in (0, 1]")
        if not 0 <= plan.sla_credit_fraction <= 1:
            raise InvalidPlan("sla_credit_fraction must be in [0, 1]")
    return plan


class ControlPlane:
    """The marketplace store. Thread-safe; one writer at a time."""

    def __init__(self, event_log_path: str | None = None):
        self._lock = threading.RLock()
        self.products: dict[str, ApiProduct] = {}
        self.plans: dict[str, MonetizationPlan] = {}
        self.apps: dict[str, Application] = {}
        self.subs: dict[str, Subscription] = {}
        self._key_index: dict[str, str] = {}  # consumer_key -> app_id
        self.events: list[dict] = []
        self.deployments: dict[tuple[str, str], dict] = {}  # (env, package) -> status
        self._event_log_path = event_log_path
        self._event_file = None
        if event_log_path:
            self._replay(event_log_path)
            self._event_file = open(event_log_path, "a", encoding="utf-8")

    # --- event log -----------------------------------------------------

    def _replay(self, path: str):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._apply(json.loads(line), replay=True)
        except FileNotFoundError:
            pass

    def _emit(self, etype: str, data: dict) -> dict:
        event = {"seq": len(self.events), "ts": _now_iso(), "type": etype, "data": data}
        self._apply(event, replay=False)
        return event

    def _apply(self, event: dict, replay: bool):
        etype, data = event["type"], event["data"]
        if etype == "api_published":
            product = ApiProduct.from_json(data)
            self.products[product.api_id] = product
        elif etype == "lifecycle_set":
            self.products[data["api_id"]].lifecycle = data["target"]
        elif etype == "plan_created":
            plan = MonetizationPlan.from_json(data)
            self.plans[plan.plan_id] = plan
        elif etype == "app_registered":
            app = Application(data["app_id"], data["name"], data["consumer_key"], data["secret_hash"])
            self.apps[app.app_id] = app
            self._key_index[app.consumer_key] = app.app_id
        elif etype == "subscription_created":
            sub = Subscription(
                sub_id=data["sub_id"],
                app_id=data["app_id"],
                api_id=data["api_id"],
                plan_id=data["plan_id"],
                status="ACTIVE",
                created_at=data["created_at"],
                granted_scopes=set(data["granted_scopes"]),
            )
            self.subs[sub.sub_id] = sub
        elif etype == "subscription_revoked":
            self.subs[data["sub_id"]].status = "REVOKED"
        elif etype == "deployment_status":
            self.deployments[(data["env_id"], data["package_id"])] = data
        else:
            log.warning("ignoring unknown event type %s", etype)
        self.events.append(event)
        if not replay and self._event_file is not None:
            self._event_file.write(json.dumps(event) + "\n")
            self._event_file.flush()

    def close(self):
        if self._event_file is not None:
            self._event_file.close()
            self._event_file = None

    # --- products / plans ------------------------------------------------

    def publish_api(self, descriptor: dict) -> ApiProduct:
        with self._lock:
            context = descriptor.get("context")
            if not isinstance(context, str) or not context.startswith("/") or len(context) < 2:
                raise InvalidDescriptor(f"context must start with '/': {context!r}")
            if any(c.isspace() for c in context) or context.endswith("/"):
                raise InvalidDescriptor(f"malformed context {context!r}")
            ops_raw = descriptor.get("operations") or []
            if not ops_raw:
                raise InvalidDescriptor("at least one operation is required")
            operations = [Operation.from_json(op) for op in ops_raw]
            if not descriptor.get("name"):
                raise InvalidDescriptor("name is required")
            if not descriptor.get("backend_url"):
                raise InvalidDescriptor("backend_url is required")
            for product in self.products.values():
                if product.lifecycle != "RETIRED" and product.context == context:
                    raise ContextConflict(f"context {context} already in use by {product.api_id}")
            product = ApiProduct(
                api_id=_new_id("api"),
                name=descriptor["name"],
                version=descriptor.get("version", "1.0.0"),
                context=context,
                backend_url=descriptor["backend_url"],
                operations=operations,
            )
            self._emit("api_published", product.to_json())
            return product

    def set_lifecycle(self, api_id: str, target: str) -> ApiProduct:
        with self._lock:
            product = self.products.get(api_id)
            if product is None:
                raise NotFound(f"no product {api_id}")
            if target not in LIFECYCLE_ORDER:
                raise IllegalTransition(f"unknown lifecycle state {target!r}")
            if LIFECYCLE_ORDER.index(target) <= LIFECYCLE_ORDER.index(product.lifecycle):
                raise IllegalTransition(f"{product.lifecycle} -> {target} is not a forward transition")
            self._emit("lifecycle_set", {"api_id": api_id, "target": target})
            return product

    def create_plan(self, api_id: str, spec: dict) -> MonetizationPlan:
        with self._lock:
            if api_id not in self.products:
                raise NotFound(f"no product {api_id}")
            plan = _parse_plan_spec(api_id, spec)
            self._emit("plan_created", plan.to_json())
            return plan

    # --- applications ------------------------------------------------------

    def register_application(self, name: str) -> tuple[Application, str]:
        with self._lock:
            if not isinstance(name, str) or not name.strip():
                raise InvalidName("application name must be non-empty")
            secret = secrets.token_urlsafe(32)  # 256 bits
            app = Application(
                app_id=_new_id("app"),
                name=name.strip(),
                consumer_key=f"ck_{secrets.token_hex(12)}",
                secret_hash=_hash_secret(secret),
            )
            self._emit("app_registered", app.to_json(include_hash=True))
            return app, secret

    def authenticate(self, consumer_key: str, consumer_secret: str) -> Application:
        with self._lock:
            app_id = self._key_index.get(consumer_key)
            if app_id is None:
                raise BadCredentials("unknown consumer key")
            app = self.apps[app_id]
            supplied = _hash_secret(consumer_secret or "")
            if not secrets.compare_digest(supplied, app.secret_hash):
                raise BadCredentials("secret does not match")
            return app

    def grantable_scopes(self, app_id: str) -> set[str]:
        """Union of granted scopes over the app's ACTIVE subscriptions."""
        with self._lock:
            scopes: set[str] = set()
            for sub in self.subs.values():
                if sub.app_id == app_id and sub.status == "ACTIVE":
                    scopes |= sub.granted_scopes
            return scopes

    # --- subscriptions -------------------------------------------------

    def subscribe(self, app_id: str, api_id: str, plan_id: str,
                  scopes: set[str] | None = None) -> Subscription:
        with self._lock:
            if app_id not in self.apps:
                raise NotFound(f"no application {app_id}")
            product = self.products.get(api_id)
            if product is None:
                raise NotFound(f"no product {api_id}")
            plan = self.plans.get(plan_id)
            if plan is None or plan.api_id != api_id:
                raise NotFound(f"no plan {plan_id} on product {api_id}")
            if product.lifecycle != "PUBLISHED":
                raise NotPublished(f"product {api_id} is {product.lifecycle}")
            for sub in self.subs.values():
                if sub.app_id == app_id and sub.api_id == api_id and sub.status == "ACTIVE":
                    raise AlreadySubscribed(f"{app_id} already subscribed to {api_id} ({sub.sub_id})")
            granted = set(scopes) if scopes is not None else set(product.scopes)
            if not granted <= product.scopes:
                raise ScopeNotGranted(f"scopes {granted - product.scopes} not offered by {api_id}")
            sub = Subscription(
                sub_id=_new_id("sub"),
                app_id=app_id,
                api_id=api_id,
                plan_id=plan_id,
                granted_scopes=granted,
            )
            self._emit("subscription_created", sub.to_json())
            return sub

    def revoke_subscription(self, sub_id: str) -> Subscription:
        with self._lock:
            sub = self.subs.get(sub_id)
            if sub is None:
                raise NotFound(f"no subscription {sub_id}")
            if sub.status == "REVOKED":
                raise AlreadyRevoked(sub_id)
            self._emit("subscription_revoked", {"sub_id": sub_id})
            return sub

    def lookup_subscription(self, consumer_key: str, context: str) -> dict:
        """Resolve the subscription binding a consumer key to a context.

        Returns the ACTIVE subscription when one exists; otherwise the most
        recently created REVOKED one (so the gateway can answer
        SUBSCRIPTION_INACTIVE instead of a bare 403).
        """
        with self._lock:
            app_id = self._key_index.get(consumer_key)
            if app_id is None:
                raise NotFound("unknown consumer key")
            product = next(
                (p for p in self.products.values()
                 if p.context == context and p.lifecycle in ROUTABLE_STATES),
                None,
            )
            if product is None:
                raise NotFound(f"no routable product at {context}")
            candidates = [s for s in self.subs.values()
                          if s.app_id == app_id and s.api_id == product.api_id]
            active = [s for s in candidates if s.status == "ACTIVE"]
            sub = active[0] if active else (
                max(candidates, key=lambda s: s.created_at, default=None)
            )
            if sub is None:
                raise NotFound(f"{consumer_key} has no subscription for {context}")
            plan = self.plans[sub.plan_id]
            return {
                "sub_id": sub.sub_id,
                "app_id": app_id,
                "api_id": product.api_id,
                "status": sub.status,
                "granted_scopes": sorted(sub.granted_scopes),
                "plan": plan.to_json(),
                "context": product.context,
                "backend_url": product.backend_url,
                "operations": [op.to_json() for op in product.operations],
            }

    # --- views ----------------------------------------------------------

    def catalog(self, routable: bool = False) -> list[dict]:
        states = ROUTABLE_STATES if routable else {"PUBLISHED"}
        with self._lock:
            out = []
            for product in self.products.values():
                if product.lifecycle in states:
                    entry = product.to_json()
                    entry["plans"] = [p.to_json() for p in self.plans.values()
                                      if p.api_id == product.api_id]
                    out.append(entry)
            return sorted(out, key=lambda e: e["context"])

    def events_from(self, seq: int, etype: str | None = None) -> list[dict]:
        with self._lock:
            selected = self.events[seq:]
            if etype:
                selected = [e for e in selected if e["type"] == etype]
            return list(selected)

    def record_deployment_status(self, data: dict) -> dict:
        with self._lock:
            entry = {
                "env_id": data.get("env_id"),
                "package_id": data.get("package_id"),
                "status": data.get("status"),
                "detail": data.get("detail", ""),
                "sub_id": data.get("sub_id"),
                "ts": _now_iso(),
            }
            if not entry["env_id"] or not entry["package_id"] or not entry["status"]:
                raise BazaarError("env_id, package_id and status are required")
            self._emit("deployment_status", entry)
            return entry

    def deployment_statuses(self, env_id: str | None = None,
                            package_id: str | None = None) -> list[dict]:
        with self._lock:
            out = [s for s in self.deployments.values()
                   if (env_id is None or s["env_id"] == env_id)
                   and (package_id is None or s["package_id"] == package_id)]
            return sorted(out, key=lambda s: (s["env_id"], s["package_id"]))


class ControlPlaneApp:
    """REST surface over a ControlPlane store."""

    def __init__(self, store: ControlPlane, usage_log_path: str | None = None):
        self.store = store
        self.usage_log_path = usage_log_path
        r = self.router = Router()
        r.add("POST", "/admin/apis", self._publish)
        r.add("POST", "/admin/apis/{api_id}/lifecycle", self._lifecycle)
        r.add("POST", "/admin/apis/{api_id}/plans", self._create_plan)
        r.add("POST", "/admin/apps", self._register_app)
        r.add("POST", "/admin/apps/verify", self._verify_app)
        r.add("POST", "/admin/subscriptions", self._subscribe)
        r.add("DELETE", "/admin/subscriptions/{sub_id}", self._revoke)
        r.add("GET", "/admin/subscriptions/lookup", self._lookup)
        r.add("GET", "/admin/events", self._events)
        r.add("POST", "/admin/deployments/status", self._post_deploy_status)
        r.add("GET", "/admin/deployments/status", self._get_deploy_status)
        r.add("GET", "/admin/usage", self._usage)
        r.add("GET", "/catalog", self._catalog)
        r.add("GET", "/health", lambda req: Response.json({"status": "ok"}))

    def handle(self, request: Request) -> Response:
        return self.router.handle(request)

    def _publish(self, req: Request) -> Response:
        product = self.store.publish_api(req.json())
        return Response.json(product.to_json(), status=201)

    def _lifecycle(self, req: Request) -> Response:
        product = self.store.set_lifecycle(req.params["api_id"], req.json().get("target"))
        return Response.json(product.to_json())

    def _create_plan(self, req: Request) -> Response:
        plan = self.store.create_plan(req.params["api_id"], req.json())
        return Response.json(plan.to_json(), status=201)

    def _register_app(self, req: Request) -> Response:
        app, secret = self.store.register_application(req.json().get("name", ""))
        payload = app.to_json()
        payload["consumer_secret"] = secret  # shown exactly once
        return Response.json(payload, status=201)

    def _verify_app(self, req: Request) -> Response:
        body = req.json()
        app = self.store.authenticate(body.get("consumer_key", ""), body.get("consumer_secret", ""))
        return Response.json({
            "app_id": app.app_id,
            "consumer_key": app.consumer_key,
            "grantable_scopes": sorted(self.store.grantable_scopes(app.app_id)),
        })

    def _subscribe(self, req: Request) -> Response:
        body = req.json()
        scopes = set(body["scopes"]) if body.get("scopes") is not None else None
        sub = self.store.subscribe(body.get("app_id"), body.get("api_id"),
                                   body.get("plan_id"), scopes)
        return Response.json(sub.to_json(), status=201)

    def _revoke(self, req: Request) -> Response:
        sub = self.store.revoke_subscription(req.params["sub_id"])
        return Response.json(sub.to_json())

    def _lookup(self, req: Request) -> Response:
        view = self.store.lookup_subscription(req.query.get("key", ""), req.query.get("context", ""))
        return Response.json(view)

    def _events(self, req: Request) -> Response:
        seq = int(req.query.get("from", 0))
        return Response.json({"events": self.store.events_from(seq, req.query.get("type"))})

    def _post_deploy_status(self, req: Request) -> Response:
        return Response.json(self.store.record_deployment_status(req.json()), status=201)

    def _get_deploy_status(self, req: Request) -> Response:
        statuses = self.store.deployment_statuses(req.query.get("env"), req.query.get("package"))
        return Response.json({"deployments": statuses})

    def _catalog(self, req: Request) -> Response:
        routable = req.query.get("routable") in ("1", "true")
        return Response.json({"products": self.store.catalog(routable=routable)})

    def _usage(self, req: Request) -> Response:
        # thin read-through to the reconciliation aggregator for the portal
        from . import reconciliation

        if not self.usage_log_path:
            return Response.json({"summaries": []})
        period = req.query.get("period", "")
        try:
            start, end = reconciliation.parse_period(period)
        except ValueError as exc:
            raise BazaarError(str(exc)) from exc
        records = reconciliation.read_usage_log(self.usage_log_path)
        summaries = reconciliation.aggregate_usage(records, (start, end),
                                                   sub_id=req.query.get("sub") or None)
        return Response.json({"summaries": [s.to_json() for s in summaries]})


class ControlPlaneClient:
    """HTTP client used by the other services when running out of process."""

    def __init__(self, base_url: str, session: requests.Session | None = None, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.session = session or requests.Session()
        self.timeout = timeout

    def _check(self, resp: requests.Response) -> dict:
        if resp.status_code >= 400:
            try:
                payload = resp.json()
            except ValueError:
                payload = {"error": "INTERNAL", "message": resp.text}
            raise errors.from_code(payload.get("error", "ERROR"),
                                   payload.get("message", ""), resp.status_code)
        return resp.json() if resp.content else {}

    def publish_api(self, descriptor: dict) -> dict:
        resp = self.session.post(f"{self.base_url}/admin/apis", json=descriptor,
                                 timeout=self.timeout)
        return self._check(resp)

    def set_lifecycle(self, api_id: str, target: str) -> dict:
        resp = self.session.post(f"{self.base_url}/admin/apis/{api_id}/lifecycle",
                                 json={"target": target}, timeout=self.timeout)
        return self._check(resp)

    def create_plan(self, api_id: str, spec: dict) -> dict:
        resp = self.session.post(f"{self.base_url}/admin/apis/{api_id}/plans",
                                 json=spec, timeout=self.timeout)
        return self._check(resp)

    def register_application(self, name: str) -> dict:
        resp = self.session.post(f"{self.base_url}/admin/apps", json={"name": name},
                                 timeout=self.timeout)
        return self._check(resp)

    def subscribe(self, app_id: str, api_id: str, plan_id: str,
                  scopes: list[str] | None = None) -> dict:
        body = {"app_id": app_id, "api_id": api_id, "plan_id": plan_id}
        if scopes is not None:
            body["scopes"] = scopes
        resp = self.session.post(f"{self.base_url}/admin/subscriptions", json=body,
                                 timeout=self.timeout)
        return self._check(resp)

    def revoke_subscription(self, sub_id: str) -> dict:
        resp = self.session.delete(f"{self.base_url}/admin/subscriptions/{sub_id}",
                                   timeout=self.timeout)
        return self._check(resp)

    def usage(self, period: str, sub_id: str | None = None) -> list[dict]:
        params = {"period": period}
        if sub_id:
            params["sub"] = sub_id
        resp = self.session.get(f"{self.base_url}/admin/usage", params=params,
                                timeout=self.timeout)
        return self._check(resp)["summaries"]

    def catalog(self, routable: bool = False) -> list[dict]:
        resp = self.session.get(f"{self.base_url}/catalog",
                                params={"routable": "1"} if routable else None,
                                timeout=self.timeout)
        return self._check(resp)["products"]

    def lookup_subscription(self, consumer_key: str, context: str) -> dict:
        resp = self.session.get(
            f"{self.base_url}/admin/subscriptions/lookup",
            params={"key": consumer_key, "context": context},
            timeout=self.timeout,
        )
        return self._check(resp)

    def verify_credentials(self, consumer_key: str, consumer_secret: str) -> dict:
        resp = self.session.post(
            f"{self.base_url}/admin/apps/verify",
            json={"consumer_key": consumer_key, "consumer_secret": consumer_secret},
            timeout=self.timeout,
        )
        return self._check(resp)

    def events_from(self, seq: int, etype: str | None = None) -> list[dict]:
        params = {"from": str(seq)}
        if etype:
            params["type"] = etype
        resp = self.session.get(f"{self.base_url}/admin/events", params=params, timeout=self.timeout)
        return self._check(resp)["events"]

    def post_deployment_status(self, status: dict) -> dict:
        resp = self.session.post(f"{self.base_url}/admin/deployments/status",
                                 json=status, timeout=self.timeout)
        return self._check(resp)

    def deployment_statuses(self, env_id: str | None = None) -> list[dict]:
        params = {"env": env_id} if env_id else None
        resp = self.session.get(f"{self.base_url}/admin/deployments/status",
                                params=params, timeout=self.timeout)
        return self._check(resp)["deployments"]
