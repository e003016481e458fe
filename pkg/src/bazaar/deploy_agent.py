"""Deploy agent: converge runtime environments onto deployment descriptors.

Descriptors (single JSON documents) say what to run where; the agent fetches
them from a local path or an HTTP config source, applies them to a target
environment and reports status back to the control plane. Subscribing to a
product whose api_id is mapped to a config source triggers the same flow
automatically via the control plane's event log, polled once a second.

Descriptor schema::

    {
      "package_id": "dt-scheduler",
      "version": "1.0.0",
      "source_ref": "where this bundle came from (informational)",
      "env_id": "env-edge-1",
      "launch": {"argv": ["python", "-m", "..."], "env": {"VAR": "..."}},
      "desired": "PRESENT"            // or "ABSENT"
    }
"""

from __future__ import annotations

import json
import logging
import os
import subprocess
import threading
import time
from dataclasses import dataclass, field

import requests

from .errors import (InvalidDescriptor, LaunchFailed, SourceNotFound,
                     UnknownEnvironment)

log = logging.getLogger("bazaar.deploy")

STATUSES = ("PENDING", "RUNNING", "FAILED", "REMOVED")
DESIRED = ("PRESENT", "ABSENT")


@dataclass
class DeploymentDescriptor:
    package_id: str
    version: str
    source_ref: str
    env_id: str
    launch: dict
    desired: str = "PRESENT"

    @classmethod
    def from_json(cls, data: dict) -> "DeploymentDescriptor":
        if not isinstance(data, dict):
            raise InvalidDescriptor("descriptor must be a JSON object")
        missing = [f for f in ("package_id", "version", "env_id", "launch") if f not in data]
        if missing:
            raise InvalidDescriptor(f"descriptor missing {', '.join(missing)}")
        launch = data["launch"]
        if not isinstance(launch, dict) or not isinstance(launch.get("argv", []), list):
            raise InvalidDescriptor("launch must be an object with an argv list")
        desired = data.get("desired", "PRESENT")
        if desired not in DESIRED:
            raise InvalidDescriptor(f"desired must be PRESENT or ABSENT, got {desired!r}")
        return cls(
            package_id=data["package_id"],
            version=data["version"],
            source_ref=data.get("source_ref", ""),
            env_id=data["env_id"],
            launch=launch,
            desired=desired,
        )

    def to_json(self) -> dict:
        return {
            "package_id": self.package_id,
            "version": self.version,
            "source_ref": self.source_ref,
            "env_id": self.env_id,
            "launch": self.launch,
            "desired": self.desired,
        }


def fetch_config(source_ref: str) -> DeploymentDescriptor:
    """Load a descriptor from an HTTP URL, a JSON file or a bundle directory."""
    if source_ref.startswith(("http://", "https://")):
        try:
            resp = requests.get(source_ref, timeout=5)
        except requests.RequestException as exc:
            raise SourceNotFound(f"cannot reach {source_ref}: {exc}") from exc
        if resp.status_code != 200:
            raise SourceNotFound(f"{source_ref} answered {resp.status_code}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise InvalidDescriptor(f"{source_ref}: not JSON: {exc}") from exc
        return DeploymentDescriptor.from_json(data)

    path = source_ref
    if os.path.isdir(path):
        path = os.path.join(path, "descriptor.json")
    if not os.path.exists(path):
        raise SourceNotFound(f"no descriptor at {source_ref}")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidDescriptor(f"{path}: not JSON: {exc}") from exc
    return DeploymentDescriptor.from_json(data)


@dataclass
class _Deployment:
    descriptor: DeploymentDescriptor
    status: str
    detail: str = ""
    process: subprocess.Popen | None = field(default=None, repr=False)


class EnvironmentRuntime:
    """One deployment target: MOCK keeps books, LOCAL_PROCESS spawns children."""

    def __init__(self, env_id: str, kind: str = "MOCK"):
        if kind not in ("MOCK", "LOCAL_PROCESS"):
            raise ValueError(f"unknown runtime kind {kind!r}")
        self.env_id = env_id
        self.kind = kind
        self.deployed: dict[str, _Deployment] = {}
        self.lock = threading.Lock()   # applies to one env are serialized

    def apply(self, descriptor: DeploymentDescriptor) -> dict:
        with self.lock:
            if descriptor.desired == "ABSENT":
                return self._remove(descriptor)
            return self._ensure_present(descriptor)

    def _ensure_present(self, descriptor: DeploymentDescriptor) -> dict:
        existing = self.deployed.get(descriptor.package_id)
        if existing is not None and existing.status == "RUNNING" \
                and existing.descriptor.version == descriptor.version \
                and self._alive(existing):
            return self._entry(existing)   # idempotent: already converged

        if self.kind == "MOCK":
            deployment = _Deployment(descriptor, "RUNNING", "mock runtime")
        else:
            deployment = self._launch(descriptor)
        self.deployed[descriptor.package_id] = deployment
        return self._entry(deployment)

    def _launch(self, descriptor: DeploymentDescriptor) -> _Deployment:
        argv = descriptor.launch.get("argv") or []
        if not argv:
            raise LaunchFailed("launch.argv is empty")
        env = dict(os.environ)
        env.update({str(k): str(v) for k, v in (descriptor.launch.get("env") or {}).items()})
        try:
            proc = subprocess.Popen(argv, env=env,
                                    stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        except OSError as exc:
            raise LaunchFailed(f"cannot start {argv[0]}: {exc}") from exc
        time.sleep(0.05)
        code = proc.poll()
        if code is not None:
            raise LaunchFailed(f"{argv[0]} exited immediately with code {code}")
        return _Deployment(descriptor, "RUNNING", f"pid {proc.pid}", process=proc)

    def _remove(self, descriptor: DeploymentDescriptor) -> dict:
        existing = self.deployed.pop(descriptor.package_id, None)
        if existing is not None and existing.process is not None:
            existing.process.terminate()
            try:
                existing.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                existing.process.kill()
        return {"package_id": descriptor.package_id, "status": "REMOVED", "detail": ""}

    def _alive(self, deployment: _Deployment) -> bool:
        if self.kind == "MOCK":
            return True
        return deployment.process is not None and deployment.process.poll() is None

    def _entry(self, deployment: _Deployment) -> dict:
        return {
            "package_id": deployment.descriptor.package_id,
            "status": deployment.status,
            "detail": deployment.detail,
        }

    def report(self) -> list[dict]:
        with self.lock:
            return [self._entry(d) for d in self.deployed.values()]

    def shutdown(self):
        with self.lock:
            for deployment in self.deployed.values():
                if deployment.process is not None:
                    deployment.process.terminate()
            self.deployed.clear()


class DeployAgent:
    """Watches subscription events and converges environments to descriptors.

    ``package_map`` binds api_id to a descriptor source; products without an
    entry deploy nothing. The journal keeps every applied descriptor, so a
    RUNNING package can always be traced to a desired=PRESENT document.
    """

    def __init__(self, environments: list[EnvironmentRuntime],
                 package_map: dict[str, str] | None = None,
                 control_plane=None, poll_interval: float = 1.0,
                 retries: int = 3, retry_delay: float = 2.0):
        self.environments = {env.env_id: env for env in environments}
        self.package_map = dict(package_map or {})
        self.control_plane = control_plane
        self.poll_interval = poll_interval
        self.retries = retries
        self.retry_delay = retry_delay
        self.journal: dict[tuple[str, str], DeploymentDescriptor] = {}
        self._journal_lock = threading.Lock()
        self._seen_seq = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # --- direct application ------------------------------------------------

    def apply(self, descriptor: DeploymentDescriptor, sub_id: str | None = None) -> dict:
        env = self.environments.get(descriptor.env_id)
        if env is None:
            raise UnknownEnvironment(f"no environment {descriptor.env_id}")
        try:
            entry = env.apply(descriptor)
        except LaunchFailed as exc:
            entry = {"package_id": descriptor.package_id, "status": "FAILED",
                     "detail": exc.message}
            self._record(descriptor, entry, sub_id)
            raise
        self._record(descriptor, entry, sub_id)
        return entry

    def _record(self, descriptor: DeploymentDescriptor, entry: dict, sub_id: str | None):
        with self._journal_lock:
            key = (descriptor.env_id, descriptor.package_id)
            if descriptor.desired == "ABSENT":
                self.journal.pop(key, None)
            else:
                self.journal[key] = descriptor
        if self.control_plane is not None:
            status = {
                "env_id": descriptor.env_id,
                "package_id": descriptor.package_id,
                "status": entry["status"],
                "detail": entry.get("detail", ""),
                "sub_id": sub_id,
            }
            try:
                self.control_plane.post_deployment_status(status)
            except Exception as exc:  # noqa: BLE001 - reporting must not kill the agent
                log.warning("status report failed: %s", exc)

    def report_status(self, env_id: str | None = None) -> list[dict]:
        if env_id is not None:
            env = self.environments.get(env_id)
            if env is None:
                raise UnknownEnvironment(f"no environment {env_id}")
            return env.report()
        out = []
        for env in self.environments.values():
            for entry in env.report():
                out.append({"env_id": env.env_id, **entry})
        return out

    # --- event-driven path ---------------------------------------------------

    def on_subscription_event(self, event_data: dict) -> dict | None:
        source_ref = self.package_map.get(event_data.get("api_id", ""))
        if source_ref is None:
            return None
        sub_id = event_data.get("sub_id")
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.retry_delay)
            try:
                descriptor = fetch_config(source_ref)
                return self.apply(descriptor, sub_id=sub_id)
            except Exception as exc:  # noqa: BLE001 - retried, then surfaced as FAILED
                last_error = exc
                log.warning("deploy attempt %d for %s failed: %s",
                            attempt + 1, event_data.get("api_id"), exc)
        entry = {"package_id": "?", "status": "FAILED", "detail": str(last_error)}
        if self.control_plane is not None:
            try:
                self.control_plane.post_deployment_status({
                    "env_id": "?", "package_id": event_data.get("api_id", "?"),
                    "status": "FAILED", "detail": str(last_error), "sub_id": sub_id,
                })
            except Exception as exc:  # noqa: BLE001
                log.warning("status report failed: %s", exc)
        return entry

    def _poll_loop(self):
        while not self._stop.wait(self.poll_interval):
            try:
                events = self.control_plane.events_from(self._seen_seq,
                                                        etype="subscription_created")
            except Exception as exc:  # noqa: BLE001 - keep polling through outages
                log.warning("event poll failed: %s", exc)
                continue
            for event in events:
                self._seen_seq = max(self._seen_seq, event["seq"] + 1)
                self.on_subscription_event(event["data"])

    def start(self):
        if self.control_plane is None:
            raise ValueError("agent needs a control plane client to poll events")
        self._stop.clear()
        self._thread = threading.Thread(target=self._poll_loop, name="deploy-agent", daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=2)
        for env in self.environments.values():
            env.shutdown()
