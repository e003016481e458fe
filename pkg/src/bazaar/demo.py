"""Scripted end-to-end marketplace walk: publish, subscribe, deploy, meter, bill.

Boots a throwaway topology on loopback, publishes a digital-twin data
product backed by the RAN simulator, registers a consumer app, subscribes
it (which triggers a MOCK deployment), issues a token, drives paid calls
through the gateway and prices the resulting usage records. The default
fixture makes 250 calls on a 0.01-per-call plan, so the statement total
comes out at 2.50.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import tempfile
import time

import requests

from . import reconciliation
from .control_plane import ControlPlaneClient
from .deploy_agent import DeployAgent, EnvironmentRuntime
from .topology import Topology

log = logging.getLogger("bazaar.demo")

DEMO_ENV = "env-demo"
DEMO_PACKAGE = "ran-digital-twin"


def _wait_for(predicate, timeout_s: float, interval_s: float = 0.1):
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        value = predicate()
        if value:
            return value
        time.sleep(interval_s)
    return None


def run_demo(calls: int = 250, data_dir: str | None = None,
             deploy_poll_s: float = 1.0) -> dict:
    """Run the whole flow; returns a report with one entry per stage."""
    started = time.monotonic()
    own_tmp = None
    if data_dir is None:
        own_tmp = tempfile.TemporaryDirectory(prefix="bazaar-demo-")
        data_dir = own_tmp.name

    topo = Topology({"data_dir": data_dir}, ephemeral=True).start()
    agent = None
    try:
        client = ControlPlaneClient(topo.control_plane_url)

        product = client.publish_api({
            "name": "RAN Digital Twin Feed",
            "version": "1.0.0",
            "context": "/dt",
            "backend_url": topo.ric_sim_url,
            "operations": [["GET", "/A1-P/v2/policytypes", "dt:read"]],
        })
        client.set_lifecycle(product["api_id"], "PUBLISHED")
        plan = client.create_plan(product["api_id"], {
            "kind": "PAY_PER_USE",
            "unit_rate": "0.01",
            "throttle_rate": 1000,
            "throttle_burst": 1000,
        })
        app = client.register_application("demo-consumer")

        descriptor_path = os.path.join(data_dir, "descriptor.json")
        with open(descriptor_path, "w", encoding="utf-8") as fh:
            json.dump({
                "package_id": DEMO_PACKAGE,
                "version": "1.0.0",
                "source_ref": descriptor_path,
                "env_id": DEMO_ENV,
                "launch": {"argv": []},
                "desired": "PRESENT",
            }, fh)
        agent = DeployAgent(
            environments=[EnvironmentRuntime(DEMO_ENV, "MOCK")],
            package_map={product["api_id"]: descriptor_path},
            control_plane=ControlPlaneClient(topo.control_plane_url),
            poll_interval=deploy_poll_s,
        )
        agent.start()

        sub = client.subscribe(app["app_id"], product["api_id"], plan["plan_id"])

        deployment = _wait_for(
            lambda: next((d for d in client.deployment_statuses(DEMO_ENV)
                          if d["status"] == "RUNNING"), None),
            timeout_s=5.0,
        )
        if deployment is None:
            raise RuntimeError("MOCK deployment did not reach RUNNING within 5 s")

        token_resp = requests.post(f"{topo.token_url}/token", json={
            "key": app["consumer_key"],
            "secret": app["consumer_secret"],
            "scope": "dt:read",
            "audience": topo.config["gateway_id"],
        }, timeout=5)
        token_resp.raise_for_status()
        token = token_resp.json()["access_token"]

        session = requests.Session()
        url = f"{topo.gateway_url}/dt/A1-P/v2/policytypes"
        headers = {"Authorization": f"Bearer {token}"}
        first = session.get(url, headers=headers, timeout=10)
        if first.status_code != 200:
            raise RuntimeError(f"first gateway call failed: {first.status_code} {first.text}")
        ok = 1
        for _ in range(calls - 1):
            if session.get(url, headers=headers, timeout=10).status_code == 200:
                ok += 1

        records = reconciliation.read_usage_log(topo.usage_log_path)
        timestamps = [reconciliation.parse_record_timestamp(r["timestamp"]) for r in records]
        window = (min(timestamps).replace(minute=0, second=0, microsecond=0),
                  max(timestamps) + dt.timedelta(seconds=1))
        summaries = reconciliation.aggregate_usage(records, window, sub_id=sub["sub_id"])
        statement = reconciliation.compute_charges(summaries[0], plan)

        return {
            "api_id": product["api_id"],
            "plan_id": plan["plan_id"],
            "app_id": app["app_id"],
            "sub_id": sub["sub_id"],
            "deployment": deployment,
            "first_call": {"status": first.status_code, "body": first.json()},
            "calls": {"made": calls, "ok": ok},
            "usage_records": len(records),
            "statement": statement,
            "elapsed_s": round(time.monotonic() - started, 3),
        }
    finally:
        if agent is not None:
            agent.stop()
        topo.stop()
        if own_tmp is not None:
            own_tmp.cleanup()
