"""Re-record the portal contract fixtures against a live loopback stack.

Boots an ephemeral topology, drives the same flows the portal offers
(catalog, publish, subscribe with a MOCK deployment, metered traffic) and
stores the raw HTTP bodies plus the CLI's view of the same usage, so the
vitest suite can hold the portal to byte-for-byte agreement.

Usage, from the repository root:

    python3 frontend/tests/fixtures/record.py
"""

import contextlib
import datetime as dt
import io
import json
import os
import tempfile
import time

import requests

from bazaar import cli
from bazaar.control_plane import ControlPlaneClient
from bazaar.deploy_agent import DeployAgent, EnvironmentRuntime
from bazaar.topology import Topology

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "topology.json")

RIC_OPERATIONS = [
    ["GET", "/A1-P/v2/policytypes", "ric:read"],
    ["PUT", "/A1-P/v2/policytypes/{t}/policies/{pid}", "ric:policy"],
]


def cli_json(*argv) -> object:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli.main(list(argv))
    assert code == 0, buf.getvalue()
    return json.loads(buf.getvalue())


def publish(client, name, context, backend, operations=None):
    product = client.publish_api({
        "name": name, "version": "1.0.0", "context": context,
        "backend_url": backend,
        "operations": operations or [["GET", "/status", "demo:read"]],
    })
    client.set_lifecycle(product["api_id"], "PUBLISHED")
    return product


def drive_traffic(topo, rest, app, quota_calls=50):
    """Mixed traffic: 50 forwarded, 18 without a token, 5 out of scope."""
    token = rest.post(f"{topo.token_url}/token", json={
        "key": app["consumer_key"], "secret": app["consumer_secret"],
        "scope": "ric:read", "audience": topo.config["gateway_id"],
    }, timeout=5).json()["access_token"]
    url = f"{topo.gateway_url}/ric/A1-P/v2/policytypes"
    auth = {"Authorization": f"Bearer {token}"}
    for _ in range(quota_calls):
        assert rest.get(url, headers=auth, timeout=5).status_code == 200
    for _ in range(18):
        assert rest.get(url, timeout=5).status_code == 401
    for _ in range(5):
        resp = rest.put(f"{topo.gateway_url}/ric/A1-P/v2/policytypes/20008/policies/x",
                        headers=auth, timeout=5)
        assert resp.status_code == 403
    return token


def main():
    tmp = tempfile.TemporaryDirectory(prefix="portal-fixtures-")
    topo = Topology({
        "data_dir": tmp.name,
        "ran": {"ues": [{"ue_id": "ue0", "spectral_efficiency_bps_per_hz": 1.0}],
                "fading_stddev": 0.3, "seed": 42},
    }, ephemeral=True).start()
    agent = None
    try:
        client = ControlPlaneClient(topo.control_plane_url)
        rest = requests.Session()

        ric = publish(client, "Near-RT RIC", "/ric", topo.ric_sim_url, RIC_OPERATIONS)
        twin = publish(client, "RAN Digital Twin", "/dt", topo.ric_sim_url)
        publish(client, "RAN Analytics", "/analytics", topo.ric_sim_url)
        publish(client, "Energy Optimizer", "/energy", topo.ric_sim_url)
        client.publish_api({  # stays CREATED; must not appear in the catalog
            "name": "Draft Product", "version": "0.1.0", "context": "/draft",
            "backend_url": topo.ric_sim_url,
            "operations": [["GET", "/x", "draft:read"]],
        })
        topo.gateway.refresh_routes()

        quota_plan = client.create_plan(ric["api_id"], {
            "kind": "QUOTA", "flat_fee": "10.00", "unit_rate": "0.01",
            "quota_limit": 100, "quota_window": "MONTH",
        })
        sla_plan = client.create_plan(ric["api_id"], {
            "kind": "SLA_TIERED", "flat_fee": "10.00",
            "sla_latency_ms": 0.25, "sla_percentile": 0.95,
            "sla_credit_fraction": 0.25,
        })
        twin_plan = client.create_plan(twin["api_id"], {"kind": "FLAT_FEE",
                                                        "flat_fee": "5.00"})

        catalog = rest.get(f"{topo.control_plane_url}/catalog", timeout=5).json()

        bad_publish = rest.post(f"{topo.control_plane_url}/admin/apis", json={
            "name": "Broken", "version": "1.0.0", "context": "/broken",
            "backend_url": topo.ric_sim_url, "operations": [],
        }, timeout=5)

        # subscribe flow: registering + subscribing to the twin product
        # triggers a MOCK deployment the portal polls to RUNNING
        descriptor_path = os.path.join(tmp.name, "descriptor.json")
        with open(descriptor_path, "w", encoding="utf-8") as fh:
            json.dump({"package_id": "ran-digital-twin", "version": "1.2.0",
                       "env_id": "env-portal", "launch": {"argv": []}}, fh)
        agent = DeployAgent(
            environments=[EnvironmentRuntime("env-portal", "MOCK")],
            package_map={twin["api_id"]: descriptor_path},
            control_plane=ControlPlaneClient(topo.control_plane_url),
            poll_interval=0.2,
        )
        agent.start()

        status_url = f"{topo.control_plane_url}/admin/deployments/status"
        deployments_before = rest.get(status_url, params={"env": "env-portal"},
                                      timeout=5).json()
        app = rest.post(f"{topo.control_plane_url}/admin/apps",
                        json={"name": "portal-demo"}, timeout=5).json()
        subscription = rest.post(f"{topo.control_plane_url}/admin/subscriptions", json={
            "app_id": app["app_id"], "api_id": twin["api_id"],
            "plan_id": twin_plan["plan_id"],
        }, timeout=5).json()
        deadline = time.time() + 10
        while time.time() < deadline:
            deployments_after = rest.get(status_url, params={"env": "env-portal"},
                                         timeout=5).json()
            if any(d["status"] == "RUNNING" for d in deployments_after["deployments"]):
                break
            time.sleep(0.2)
        else:
            raise RuntimeError("MOCK deployment never reached RUNNING")

        duplicate = rest.post(f"{topo.control_plane_url}/admin/subscriptions", json={
            "app_id": app["app_id"], "api_id": twin["api_id"],
            "plan_id": twin_plan["plan_id"],
        }, timeout=5)

        # metered traffic for the analytics fixtures
        quota_app = rest.post(f"{topo.control_plane_url}/admin/apps",
                              json={"name": "portal-quota"}, timeout=5).json()
        quota_sub = client.subscribe(quota_app["app_id"], ric["api_id"],
                                     quota_plan["plan_id"])
        drive_traffic(topo, rest, quota_app)

        sla_app = rest.post(f"{topo.control_plane_url}/admin/apps",
                            json={"name": "portal-sla"}, timeout=5).json()
        sla_sub = client.subscribe(sla_app["app_id"], ric["api_id"],
                                   sla_plan["plan_id"])
        sla_token = rest.post(f"{topo.token_url}/token", json={
            "key": sla_app["consumer_key"], "secret": sla_app["consumer_secret"],
            "scope": "ric:read", "audience": topo.config["gateway_id"],
        }, timeout=5).json()["access_token"]
        for _ in range(20):
            rest.get(f"{topo.gateway_url}/ric/A1-P/v2/policytypes",
                     headers={"Authorization": f"Bearer {sla_token}"}, timeout=5)

        period = dt.datetime.now(dt.timezone.utc).strftime("%Y-%m-%d")
        usage_url = f"{topo.control_plane_url}/admin/usage"
        usage_quota = rest.get(usage_url, params={
            "period": period, "sub": quota_sub["sub_id"]}, timeout=5).json()
        usage_sla = rest.get(usage_url, params={
            "period": period, "sub": sla_sub["sub_id"]}, timeout=5).json()

        log = topo.usage_log_path
        fixture = {
            "recorded_at": dt.datetime.now(dt.timezone.utc).isoformat(),
            "period": period,
            "catalog": catalog,
            "plans": {"quota": quota_plan, "sla": sla_plan},
            "publish_invalid": {"status": bad_publish.status_code,
                                "body": bad_publish.json()},
            "register_app": app,
            "subscribe": {
                "response": subscription,
                "duplicate": {"status": duplicate.status_code,
                              "body": duplicate.json()},
            },
            "deployments": {"before": deployments_before,
                            "after": deployments_after},
            "usage": {"quota": usage_quota, "sla": usage_sla},
            "cli": {
                "quota": cli_json("usage", "aggregate", "--period", period,
                                  "--sub", quota_sub["sub_id"], "--log", log),
                "sla": cli_json("usage", "aggregate", "--period", period,
                                "--sub", sla_sub["sub_id"], "--log", log),
            },
        }
        with open(OUT, "w", encoding="utf-8") as fh:
            json.dump(fixture, fh, indent=2)
            fh.write("\n")
        print(f"wrote {OUT}")
    finally:
        if agent is not None:
            agent.stop()
        topo.stop()
        tmp.cleanup()


if __name__ == "__main__":
    main()
