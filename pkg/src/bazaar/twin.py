"""5G digital twin: simulate scheduler choices and steer the RAN through A1.

The twin models one cell with the shared scheduler kernel, compares
simulated throughput against measured per-UE performance arriving over an
A1-EI enrichment job, and either pushes the winning scheduler as an A1-P
policy through the marketplace gateway (mode A) or publishes its per-UE
predictions to an events topic so an external rApp can decide (mode B).

Loop config document::

    {
      "mode": "A",
      "cell": {"bandwidth_hz": 1e7, "slots": 10000, "fading_stddev": 0.3,
               "seed": 42, "ues": [{"ue_id": "ue0",
                                    "spectral_efficiency_bps_per_hz": 0.5}, ...]},
      "endpoints": {"gateway": "http://...", "token": "http://...",
                    "context": "/ric"},
      "credentials": {"consumer_key": "ck_...", "consumer_secret": "...",
                      "scopes": "ric:read ric:policy ric:ei", "audience": "gw-main"},
      "ei": {"type_id": "ue-perf", "job_id": "dt-job", "period_s": 1},
      "policy_instance_id": "dt-scheduler",
      "iterations": 1,
      "delivery_timeout_s": 15,
      "divergence_threshold": 0.25,
      "topic": "dt-perf",
      "report_path": null,
      "csv_path": null
    }
"""

from __future__ import annotations

import csv
import json
import logging
import queue
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from . import sched_kernel
from .errors import (AuthFailed, DeliveryTimeout, EmptyInput, GatewayDenied,
                     InvalidConfig, ShapeMismatch)
from .httpd import HttpServer, Request, Response
from .ric_sim import SCHEDULER_POLICY_TYPE

log = logging.getLogger("bazaar.twin")

POLICIES = ("ROUND_ROBIN", "PROPORTIONAL_FAIR")


@dataclass
class CellConfig:
    bandwidth_hz: float
    ues: list
    slots: int
    fading_stddev: float = 0.0
    seed: int = 0

    def validate(self):
        if self.bandwidth_hz <= 0:
            raise InvalidConfig("bandwidth_hz must be > 0")
        if not self.ues:
            raise InvalidConfig("at least one UE is required")
        for ue in self.ues:
            if ue.get("spectral_efficiency_bps_per_hz", 0) <= 0:
                raise InvalidConfig(f"UE {ue.get('ue_id')!r} needs a positive spectral efficiency")
        if self.slots < 1:
            raise InvalidConfig("slots must be >= 1")
        if self.fading_stddev < 0:
            raise InvalidConfig("fading_stddev must be >= 0")

    @classmethod
    def from_json(cls, data: dict) -> "CellConfig":
        try:
            config = cls(
                bandwidth_hz=float(data["bandwidth_hz"]),
                ues=list(data["ues"]),
                slots=int(data["slots"]),
                fading_stddev=float(data.get("fading_stddev", 0.0)),
                seed=int(data.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad cell config: {exc}") from exc
        config.validate()
        return config

    @property
    def efficiencies(self) -> np.ndarray:
        return np.array([ue["spectral_efficiency_bps_per_hz"] for ue in self.ues],
                        dtype=np.float64)


@dataclass
class PerfReport:
    policy: str
    per_ue_throughput_bps: list
    utility: float
    served_slots: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "policy": self.policy,
            "per_ue_throughput_bps": self.per_ue_throughput_bps,
            "utility": self.utility,
            "served_slots": self.served_slots,
        }


@dataclass
class DivergenceReport:
    per_ue_relative_diff: list
    max_diff: float
    anomalous: bool
    threshold: float

    def to_json(self) -> dict:
        return {
            "per_ue_relative_diff": self.per_ue_relative_diff,
            "max_diff": self.max_diff,
            "anomalous": self.anomalous,
            "threshold": self.threshold,
        }


def run_twin_simulation(config: CellConfig, policy: str) -> PerfReport:
    """Deterministic slot-level run of one scheduling policy."""
    config.validate()
    if policy not in sched_kernel.POLICY_IDS:
        raise InvalidConfig(f"unknown policy {policy!r}")
    tput, served, _rng = sched_kernel.simulate_with_seed(
        config.efficiencies, config.bandwidth_hz, config.slots,
        config.fading_stddev, config.seed, policy,
    )
    return PerfReport(
        policy=policy,
        per_ue_throughput_bps=[float(x) for x in tput],
        utility=float(np.sum(np.log(tput))),
        served_slots=[int(x) for x in served],
    )


def select_policy(reports: list[PerfReport]) -> str:
    """Highest utility wins; an exact tie falls back to ROUND_ROBIN."""
    if not reports:
        raise EmptyInput("no reports to select from")
    return max(reports, key=lambda r: (r.utility, r.policy == "ROUND_ROBIN")).policy


def compare_with_measured(simulated: PerfReport, measured: list,
                          threshold: float = 0.25) -> DivergenceReport:
    """Per-UE relative difference between measurement and the twin's model.

    ``measured`` is either plain throughputs or ric-style dicts carrying a
    ``throughput_bps`` field, in the same UE order as the simulation.
    """
    values = [m["throughput_bps"] if isinstance(m, dict) else float(m) for m in measured]
    if len(values) != len(simulated.per_ue_throughput_bps):
        raise ShapeMismatch(
            f"measured {len(values)} UEs, simulated {len(simulated.per_ue_throughput_bps)}")
    diffs = [abs(m - s) / s for m, s in zip(values, simulated.per_ue_throughput_bps)]
    max_diff = max(diffs)
    return DivergenceReport(per_ue_relative_diff=diffs, max_diff=max_diff,
                            anomalous=max_diff > threshold, threshold=threshold)


# --- the closed loop against the marketplace ---------------------------------


def _is_no_route(resp: requests.Response) -> bool:
    try:
        return resp.json().get("error") == "NO_ROUTE"
    except ValueError:
        return False


class _DeliveryInbox:
    """Tiny HTTP app collecting EI deliveries pushed by the RAN."""

    def __init__(self):
        self.queue: queue.Queue = queue.Queue()

    def handle(self, request: Request) -> Response:
        if request.method == "POST" and request.path == "/deliveries":
            self.queue.put(request.json())
            return Response.json({"accepted": True})
        return Response.json({"error": "NOT_FOUND"}, status=404)


class TwinLoop:
    """Drives mode A / mode B against a live marketplace topology."""

    def __init__(self, config: dict):
        self.mode = config.get("mode", "A").upper()
        if self.mode not in ("A", "B"):
            raise InvalidConfig(f"mode must be A or B, got {config.get('mode')!r}")
        self.cell = CellConfig.from_json(config["cell"])
        endpoints = config.get("endpoints", {})
        self.gateway_url = endpoints.get("gateway", "").rstrip("/")
        self.token_url = endpoints.get("token", "").rstrip("/")
        self.context = endpoints.get("context", "").rstrip("/")
        if not self.gateway_url or not self.token_url:
            raise InvalidConfig("endpoints.gateway and endpoints.token are required")
        self.credentials = config.get("credentials", {})
        self.ei = {"type_id": "ue-perf", "job_id": "dt-job", "period_s": 1,
                   **config.get("ei", {})}
        self.policy_instance_id = config.get("policy_instance_id", "dt-scheduler")
        self.iterations = int(config.get("iterations", 1))
        self.delivery_timeout_s = float(config.get("delivery_timeout_s", 15))
        self.threshold = float(config.get("divergence_threshold", 0.25))
        self.topic = config.get("topic", "dt-perf")
        self.report_path = config.get("report_path")
        self.csv_path = config.get("csv_path")
        self.route_wait_s = float(config.get("route_wait_s", 6))
        self._session = requests.Session()
        self._token: str | None = None
        self._token_reissues = 0

    # --- marketplace plumbing ---------------------------------------------

    def _issue_token(self) -> str:
        payload = {
            "key": self.credentials.get("consumer_key", ""),
            "secret": self.credentials.get("consumer_secret", ""),
            "scope": self.credentials.get("scopes", ""),
            "audience": self.credentials.get("audience", "gw-main"),
        }
        if self.credentials.get("ttl"):
            payload["ttl"] = self.credentials["ttl"]
        try:
            resp = self._session.post(f"{self.token_url}/token", json=payload, timeout=5)
        except requests.RequestException as exc:
            raise AuthFailed(f"token service unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise AuthFailed(f"token request failed: {resp.status_code} {resp.text}")
        self._token = resp.json()["access_token"]
        return self._token

    def _gw(self, method: str, path: str, body: dict | None = None) -> requests.Response:
        """Gateway call with a single re-auth retry on 401.

        A freshly published product can 404 as NO_ROUTE until the gateway's
        catalog poll catches up, so those are retried for a bounded time.
        """
        if self._token is None:
            self._issue_token()
        url = f"{self.gateway_url}{self.context}{path}"
        reauthed = False
        route_deadline = time.monotonic() + self.route_wait_s
        while True:
            resp = self._session.request(
                method, url, json=body, timeout=10,
                headers={"Authorization": f"Bearer {self._token}"},
            )
            if resp.status_code == 401 and not reauthed:
                log.info("token rejected, re-issuing and retrying %s %s", method, path)
                reauthed = True
                self._token_reissues += 1
                self._issue_token()
                continue
            if resp.status_code == 404 and _is_no_route(resp) \
                    and time.monotonic() < route_deadline:
                time.sleep(0.25)
                continue
            break
        if resp.status_code >= 400:
            raise GatewayDenied(f"{method} {path} -> {resp.status_code} {resp.text}")
        return resp

    # --- modes --------------------------------------------------------------

    def run(self) -> dict:
        started = time.time()
        if self.mode == "A":
            iterations, transitions, a1p_calls = self._run_mode_a()
        else:
            iterations, transitions, a1p_calls = self._run_mode_b()
        report = {
            "mode": self.mode,
            "cell": {"ues": len(self.cell.ues), "slots": self.cell.slots,
                     "seed": self.cell.seed, "fading_stddev": self.cell.fading_stddev},
            "iterations": iterations,
            "transitions": transitions,
            "final_policy": transitions[-1]["to"] if transitions else None,
            "a1p_calls": a1p_calls,
            "token_reissues": self._token_reissues,
            "elapsed_s": round(time.time() - started, 3),
        }
        if self.report_path:
            with open(self.report_path, "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=2)
        if self.csv_path:
            self._write_csv(iterations)
        return report

    def _simulate_candidates(self) -> dict[str, PerfReport]:
        return {policy: run_twin_simulation(self.cell, policy) for policy in POLICIES}

    def _run_mode_a(self):
        inbox = _DeliveryInbox()
        listener = HttpServer(inbox, name="twin-inbox").start()
        iterations: list[dict] = []
        transitions: list[dict] = []
        a1p_calls = 0
        enforced = None   # what this loop has pushed; RAN default is RR
        try:
            self._gw("PUT", f"/A1-EI/v1/eijobs/{self.ei['job_id']}", body={
                "ei_type_id": self.ei["type_id"],
                "job_definition": {"period_s": self.ei["period_s"],
                                   "ue_count": len(self.cell.ues)},
                "target_uri": f"{listener.url}/deliveries",
                "owner": "dt-twin",
            })
            for index in range(self.iterations):
                try:
                    delivery = inbox.queue.get(timeout=self.delivery_timeout_s)
                except queue.Empty:
                    raise DeliveryTimeout(
                        f"no EI delivery within {self.delivery_timeout_s}s") from None
                candidates = self._simulate_candidates()
                selected = select_policy(list(candidates.values()))
                # the delivery was measured under the pre-push policy; before
                # our first push that is the RAN's ROUND_ROBIN default
                ran_policy = enforced or "ROUND_ROBIN"
                divergence = compare_with_measured(candidates[ran_policy],
                                                   delivery["per_ue"], self.threshold)
                if selected != enforced:
                    self._gw("PUT",
                             f"/A1-P/v2/policytypes/{SCHEDULER_POLICY_TYPE}"
                             f"/policies/{self.policy_instance_id}",
                             body={"scheduler": selected})
                    a1p_calls += 1
                    transitions.append({"iteration": index,
                                        "from": ran_policy,
                                        "to": selected})
                    enforced = selected
                iterations.append({
                    "iteration": index,
                    "selected": selected,
                    "utilities": {p: candidates[p].utility for p in POLICIES},
                    "per_ue_throughput_bps": {
                        p: candidates[p].per_ue_throughput_bps for p in POLICIES},
                    "divergence": divergence.to_json(),
                })
            try:
                self._gw("DELETE", f"/A1-EI/v1/eijobs/{self.ei['job_id']}")
            except GatewayDenied as exc:
                log.warning("EI job cleanup failed: %s", exc)
        finally:
            listener.stop()
        return iterations, transitions, a1p_calls

    def _run_mode_b(self):
        iterations: list[dict] = []
        for index in range(self.iterations):
            candidates = self._simulate_candidates()
            selected = select_policy(list(candidates.values()))
            published = []
            for policy in POLICIES:
                resp = self._gw("POST", f"/events/{self.topic}", body={
                    "producer": "dt-twin",
                    "policy": policy,
                    "per_ue_throughput_bps": candidates[policy].per_ue_throughput_bps,
                    "utility": candidates[policy].utility,
                    "recommended": policy == selected,
                })
                published.append(resp.json().get("offset"))
            iterations.append({
                "iteration": index,
                "selected": selected,
                "utilities": {p: candidates[p].utility for p in POLICIES},
                "per_ue_throughput_bps": {
                    p: candidates[p].per_ue_throughput_bps for p in POLICIES},
                "published_offsets": published,
            })
        return iterations, [], 0

    def _write_csv(self, iterations: list[dict]):
        with open(self.csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "policy", "ue_id", "throughput_bps"])
            for item in iterations:
                for policy, values in item["per_ue_throughput_bps"].items():
                    for ue, tput in zip(self.cell.ues, values):
                        writer.writerow([item["iteration"], policy, ue["ue_id"], tput])


def run_loop(config: dict) -> dict:
    """Load, run and report one twin loop; the CLI's ``dt run`` backend."""
    return TwinLoop(config).run()
