"""Mock Open RAN backends: A1-P policies, A1-EI jobs, DMaaP-style topics.

One generic near-RT RIC dialect stands in for the vendor variants. A
built-in scheduler policy type (20008) and EI type ("ue-perf") ship as
fixtures, and a synthetic RAN driven by the shared scheduler kernel
produces the "measured" per-UE performance that enrichment jobs deliver.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from . import sched_kernel
from .errors import InvalidDefinition, NotFound, SchemaViolation, UnknownType
from .httpd import Request, Response, Router

log = logging.getLogger("bazaar.ric_sim")

SCHEDULER_POLICY_TYPE = 20008

_BUILTIN_POLICY_TYPES = {
    SCHEDULER_POLICY_TYPE: {
        "required": ["scheduler"],
        "properties": {
            "scheduler": {"type": "string", "enum": ["ROUND_ROBIN", "PROPORTIONAL_FAIR"]},
        },
    },
}

_BUILTIN_EI_TYPES = {
    "ue-perf": {
        "description": "periodic per-UE throughput and latency measurements",
        "job_definition": {"period_s": "sampling period, seconds (>= 1)",
                           "ue_count": "optional expected UE count"},
    },
}

_JSON_TYPES = {
    "string": str,
    "number": (int, float),
    "integer": int,
    "boolean": bool,
    "object": dict,
    "array": list,
}


def validate_against_schema(schema: dict, data) -> None:
    """Check required fields, primitive types and enums. Extra keys pass."""
    if not isinstance(data, dict):
        raise SchemaViolation("policy data must be a JSON object")
    for name in schema.get("required", []):
        if name not in data:
            raise SchemaViolation(f"missing required field {name!r}")
    for name, rules in schema.get("properties", {}).items():
        if name not in data:
            continue
        value = data[name]
        expected = rules.get("type")
        if expected:
            py_type = _JSON_TYPES[expected]
            ok = isinstance(value, py_type)
            if expected in ("number", "integer") and isinstance(value, bool):
                ok = False
            if not ok:
                raise SchemaViolation(f"field {name!r} must be {expected}")
        if "enum" in rules and value not in rules["enum"]:
            raise SchemaViolation(f"field {name!r} must be one of {rules['enum']}")


@dataclass
class PolicyInstance:
    policy_id: str
    policy_type_id: int
    policy_data: dict
    status: str = "ENFORCED"
    last_modified: float = field(default_factory=time.time)


@dataclass
class EiJob:
    job_id: str
    ei_type_id: str
    job_definition: dict
    target_uri: str
    owner: str = ""


@dataclass
class RanState:
    bandwidth_hz: float = 10e6
    ues: list = field(default_factory=lambda: [
        {"ue_id": "ue0", "spectral_efficiency_bps_per_hz": 1.0},
        {"ue_id": "ue1", "spectral_efficiency_bps_per_hz": 2.0},
    ])
    active_policy: str = "ROUND_ROBIN"
    seed: int = 7
    fading_stddev: float = 0.0
    noise_epsilon: float = 0.05
    metric_slots: int = 1000

    def to_json(self) -> dict:
        return {
            "bandwidth_hz": self.bandwidth_hz,
            "ues": self.ues,
            "active_policy": self.active_policy,
            "seed": self.seed,
            "fading_stddev": self.fading_stddev,
            "noise_epsilon": self.noise_epsilon,
            "metric_slots": self.metric_slots,
        }


def generate_ran_metrics(state: RanState, duration_slots: int) -> list[dict]:
    """Measured per-UE performance: the shared model plus bounded noise.

    Runs the same scheduler kernel as the twin from the sim's own seed,
    then scales each throughput by a factor uniform in [1-eps, 1+eps].
    Deterministic for a given state.
    """
    eff = np.array([ue["spectral_efficiency_bps_per_hz"] for ue in state.ues], dtype=np.float64)
    tput, _served, rng = sched_kernel.simulate_with_seed(
        eff, state.bandwidth_hz, duration_slots, state.fading_stddev,
        state.seed, state.active_policy,
    )
    eps = state.noise_epsilon
    factors = rng.uniform(1.0 - eps, 1.0 + eps, eff.shape[0])
    latencies = rng.uniform(5.0, 15.0, eff.shape[0])
    return [
        {
            "ue_id": ue["ue_id"],
            "throughput_bps": float(tput[i] * factors[i]),
            "latency_ms": float(latencies[i]),
        }
        for i, ue in enumerate(state.ues)
    ]


class _DeliveryLoop(threading.Thread):
    """Pushes one measurement payload to the job's target every period."""

    def __init__(self, sim: "RicSim", job: EiJob):
        super().__init__(name=f"ei-{job.job_id}", daemon=True)
        self.sim = sim
        self.job = job
        self.stop_event = threading.Event()

    def run(self):
        period = float(self.job.job_definition.get("period_s", 1))
        while not self.stop_event.wait(period):
            try:
                payload = {
                    "job_id": self.job.job_id,
                    "timestamp": time.time(),
                    "per_ue": self.sim.measured_per_ue(),
                }
                requests.post(self.job.target_uri, json=payload, timeout=5)
            except requests.RequestException as exc:
                log.warning("EI delivery for %s failed: %s", self.job.job_id, exc)


class RicSim:
    """Thread-safe store behind the four mock Open RAN APIs."""

    def __init__(self, state: RanState | None = None):
        self._lock = threading.RLock()
        self.state = state or RanState()
        self.policy_types: dict[int, dict] = dict(_BUILTIN_POLICY_TYPES)
        self.policies: dict[tuple[int, str], PolicyInstance] = {}
        self.ei_types: dict[str, dict] = dict(_BUILTIN_EI_TYPES)
        self.ei_jobs: dict[str, EiJob] = {}
        self._delivery_threads: dict[str, _DeliveryLoop] = {}
        self._scheduler_setter: tuple[int, str] | None = None
        self._topics: dict[str, list[dict]] = {}

    # --- A1-P ------------------------------------------------------------

    def a1p_types(self) -> list[int]:
        with self._lock:
            return sorted(self.policy_types)

    def a1p_type_schema(self, type_id: int) -> dict:
        with self._lock:
            if type_id not in self.policy_types:
                raise NotFound(f"no policy type {type_id}")
            return self.policy_types[type_id]

    def a1p_put_policy(self, type_id: int, policy_id: str, policy_data: dict) -> PolicyInstance:
        with self._lock:
            schema = self.policy_types.get(type_id)
            if schema is None:
                raise UnknownType(f"no policy type {type_id}")
            validate_against_schema(schema, policy_data)
            instance = PolicyInstance(policy_id=policy_id, policy_type_id=type_id,
                                      policy_data=policy_data, status="ENFORCED")
            self.policies[(type_id, policy_id)] = instance
            scheduler = policy_data.get("scheduler")
            if isinstance(scheduler, str) and scheduler in sched_kernel.POLICY_IDS:
                self.state.active_policy = scheduler
                self._scheduler_setter = (type_id, policy_id)
            return instance

    def a1p_policies(self, type_id: int) -> list[str]:
        with self._lock:
            if type_id not in self.policy_types:
                raise NotFound(f"no policy type {type_id}")
            return sorted(pid for (tid, pid) in self.policies if tid == type_id)

    def a1p_get_policy(self, type_id: int, policy_id: str) -> PolicyInstance:
        with self._lock:
            instance = self.policies.get((type_id, policy_id))
            if instance is None:
                raise NotFound(f"no policy {policy_id} of type {type_id}")
            return instance

    def a1p_delete_policy(self, type_id: int, policy_id: str) -> None:
        with self._lock:
            if (type_id, policy_id) not in self.policies:
                raise NotFound(f"no policy {policy_id} of type {type_id}")
            del self.policies[(type_id, policy_id)]
            if self._scheduler_setter == (type_id, policy_id):
                self.state.active_policy = "ROUND_ROBIN"
                self._scheduler_setter = None

    # --- A1-EI -----------------------------------------------------------

    def ei_type_ids(self) -> list[str]:
        with self._lock:
            return sorted(self.ei_types)

    def ei_create_job(self, ei_type_id: str, job_id: str, job_definition: dict,
                      target_uri: str, owner: str = "") -> EiJob:
        with self._lock:
            if ei_type_id not in self.ei_types:
                raise UnknownType(f"no EI type {ei_type_id!r}")
            if not isinstance(job_definition, dict):
                raise InvalidDefinition("job_definition must be an object")
            period = job_definition.get("period_s")
            if not isinstance(period, (int, float)) or isinstance(period, bool) or period < 1:
                raise InvalidDefinition("job_definition.period_s must be >= 1")
            if not target_uri or not str(target_uri).startswith("http"):
                raise InvalidDefinition(f"target_uri must be an http(s) URL: {target_uri!r}")
            self._stop_delivery(job_id)
            job = EiJob(job_id=job_id, ei_type_id=ei_type_id,
                        job_definition=job_definition, target_uri=target_uri, owner=owner)
            self.ei_jobs[job_id] = job
            loop = _DeliveryLoop(self, job)
            self._delivery_threads[job_id] = loop
            loop.start()
            return job

    def ei_get_job(self, job_id: str) -> EiJob:
        with self._lock:
            job = self.ei_jobs.get(job_id)
            if job is None:
                raise NotFound(f"no EI job {job_id!r}")
            return job

    def ei_delete_job(self, job_id: str) -> None:
        with self._lock:
            if job_id not in self.ei_jobs:
                raise NotFound(f"no EI job {job_id!r}")
            del self.ei_jobs[job_id]
            self._stop_delivery(job_id)

    def _stop_delivery(self, job_id: str):
        loop = self._delivery_threads.pop(job_id, None)
        if loop is not None:
            loop.stop_event.set()

    # --- topics ------------------------------------------------------------

    def produce_message(self, topic: str, payload) -> int:
        with self._lock:
            messages = self._topics.setdefault(topic, [])
            offset = len(messages)
            messages.append({"topic": topic, "offset": offset,
                             "payload": payload, "timestamp": time.time()})
            return offset

    def fetch_messages(self, topic: str, from_offset: int = 0, max_count: int = 100) -> list[dict]:
        with self._lock:
            messages = self._topics.get(topic, [])
            return list(messages[max(0, from_offset):max(0, from_offset) + max_count])

    # --- RAN --------------------------------------------------------------

    def measured_per_ue(self) -> list[dict]:
        with self._lock:
            return generate_ran_metrics(self.state, self.state.metric_slots)

    def configure(self, updates: dict) -> RanState:
        with self._lock:
            for name in ("bandwidth_hz", "fading_stddev", "noise_epsilon"):
                if name in updates:
                    setattr(self.state, name, float(updates[name]))
            for name in ("seed", "metric_slots"):
                if name in updates:
                    setattr(self.state, name, int(updates[name]))
            if "ues" in updates:
                self.state.ues = list(updates["ues"])
            if "active_policy" in updates:
                self.state.active_policy = str(updates["active_policy"])
            return self.state

    def shutdown(self):
        with self._lock:
            for job_id in list(self._delivery_threads):
                self._stop_delivery(job_id)


class RicSimApp:
    """REST surface; counts every non-internal request for reconciliation."""

    def __init__(self, sim: RicSim | None = None):
        self.sim = sim or RicSim()
        self._count_lock = threading.Lock()
        self.request_count = 0
        self.count_by_family: dict[str, int] = {}
        r = self.router = Router()
        r.add("GET", "/A1-P/v2/policytypes", self._types)
        r.add("GET", "/A1-P/v2/policytypes/{t}", self._type_schema)
        r.add("GET", "/A1-P/v2/policytypes/{t}/policies", self._policies)
        r.add("GET", "/A1-P/v2/policytypes/{t}/policies/{pid}", self._get_policy)
        r.add("GET", "/A1-P/v2/policytypes/{t}/policies/{pid}/status", self._policy_status)
        r.add("PUT", "/A1-P/v2/policytypes/{t}/policies/{pid}", self._put_policy)
        r.add("DELETE", "/A1-P/v2/policytypes/{t}/policies/{pid}", self._delete_policy)
        r.add("GET", "/A1-EI/v1/eitypes", self._ei_types)
        r.add("GET", "/A1-EI/v1/eitypes/{tid}", self._ei_type)
        r.add("PUT", "/A1-EI/v1/eijobs/{jid}", self._ei_put_job)
        r.add("GET", "/A1-EI/v1/eijobs/{jid}", self._ei_get_job)
        r.add("DELETE", "/A1-EI/v1/eijobs/{jid}", self._ei_delete_job)
        r.add("POST", "/events/{topic}", self._produce)
        r.add("GET", "/events/{topic}", self._fetch)
        r.add("GET", "/internal/request-count", self._request_count)
        r.add("GET", "/internal/config", self._get_config)
        r.add("PUT", "/internal/config", self._put_config)
        r.add("GET", "/health", lambda req: Response.json({"status": "ok"}))

    def handle(self, request: Request) -> Response:
        if not request.path.startswith(("/internal", "/health")):
            family = request.path.lstrip("/").split("/", 1)[0]
            with self._count_lock:
                self.request_count += 1
                self.count_by_family[family] = self.count_by_family.get(family, 0) + 1
        return self.router.handle(request)

    def _type_id(self, req: Request) -> int:
        try:
            return int(req.params["t"])
        except ValueError as exc:
            raise NotFound(f"policy type ids are integers: {req.params['t']!r}") from exc

    def _types(self, req):
        return Response.json(self.sim.a1p_types())

    def _type_schema(self, req):
        return Response.json(self.sim.a1p_type_schema(self._type_id(req)))

    def _policies(self, req):
        return Response.json(self.sim.a1p_policies(self._type_id(req)))

    def _get_policy(self, req):
        instance = self.sim.a1p_get_policy(self._type_id(req), req.params["pid"])
        return Response.json(instance.policy_data)

    def _policy_status(self, req):
        instance = self.sim.a1p_get_policy(self._type_id(req), req.params["pid"])
        return Response.json({"status": instance.status})

    def _put_policy(self, req):
        created = (self._type_id(req), req.params["pid"]) not in self.sim.policies
        self.sim.a1p_put_policy(self._type_id(req), req.params["pid"], req.json())
        return Response.json({"policy_id": req.params["pid"], "status": "ENFORCED"},
                             status=201 if created else 200)

    def _delete_policy(self, req):
        self.sim.a1p_delete_policy(self._type_id(req), req.params["pid"])
        return Response.no_content()

    def _ei_types(self, req):
        return Response.json(self.sim.ei_type_ids())

    def _ei_type(self, req):
        tid = req.params["tid"]
        if tid not in self.sim.ei_types:
            raise NotFound(f"no EI type {tid!r}")
        return Response.json(self.sim.ei_types[tid])

    def _ei_put_job(self, req):
        body = req.json()
        job = self.sim.ei_create_job(
            ei_type_id=body.get("ei_type_id", ""),
            job_id=req.params["jid"],
            job_definition=body.get("job_definition", {}),
            target_uri=body.get("target_uri", ""),
            owner=body.get("owner", ""),
        )
        return Response.json({
            "job_id": job.job_id, "ei_type_id": job.ei_type_id,
            "job_definition": job.job_definition,
            "target_uri": job.target_uri, "owner": job.owner,
        }, status=201)

    def _ei_get_job(self, req):
        job = self.sim.ei_get_job(req.params["jid"])
        return Response.json({
            "job_id": job.job_id, "ei_type_id": job.ei_type_id,
            "job_definition": job.job_definition,
            "target_uri": job.target_uri, "owner": job.owner,
        })

    def _ei_delete_job(self, req):
        self.sim.ei_delete_job(req.params["jid"])
        return Response.no_content()

    def _produce(self, req):
        offset = self.sim.produce_message(req.params["topic"], req.json())
        return Response.json({"topic": req.params["topic"], "offset": offset}, status=201)

    def _fetch(self, req):
        messages = self.sim.fetch_messages(
            req.params["topic"],
            from_offset=int(req.query.get("from", 0)),
            max_count=int(req.query.get("max", 100)),
        )
        return Response.json({"messages": messages})

    def _request_count(self, req):
        with self._count_lock:
            return Response.json({"total": self.request_count,
                                  "by_family": dict(self.count_by_family)})

    def _get_config(self, req):
        return Response.json(self.sim.state.to_json())

    def _put_config(self, req):
        return Response.json(self.sim.configure(req.json()).to_json())
