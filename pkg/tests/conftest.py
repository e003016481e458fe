"""Shared fixtures: a loopback topology per test plus marketplace helpers."""

import re

import pytest
import requests

from bazaar.control_plane import ControlPlaneClient
from bazaar.topology import Topology

RIC_OPERATIONS = [
    ["GET", "/A1-P/v2/policytypes", "ric:read"],
    ["GET", "/A1-P/v2/policytypes/{t}", "ric:read"],
    ["GET", "/A1-P/v2/policytypes/{t}/policies", "ric:read"],
    ["GET", "/A1-P/v2/policytypes/{t}/policies/{pid}", "ric:read"],
    ["GET", "/A1-P/v2/policytypes/{t}/policies/{pid}/status", "ric:read"],
    ["PUT", "/A1-P/v2/policytypes/{t}/policies/{pid}", "ric:policy"],
    ["DELETE", "/A1-P/v2/policytypes/{t}/policies/{pid}", "ric:policy"],
    ["GET", "/A1-EI/v1/eitypes", "ric:read"],
    ["PUT", "/A1-EI/v1/eijobs/{jid}", "ric:ei"],
    ["DELETE", "/A1-EI/v1/eijobs/{jid}", "ric:ei"],
    ["POST", "/events/{topic}", "ric:events"],
    ["GET", "/events/{topic}", "ric:read"],
]

FIXTURE_UES = [
    {"ue_id": "ue0", "spectral_efficiency_bps_per_hz": 0.5},
    {"ue_id": "ue1", "spectral_efficiency_bps_per_hz": 1.0},
    {"ue_id": "ue2", "spectral_efficiency_bps_per_hz": 2.0},
    {"ue_id": "ue3", "spectral_efficiency_bps_per_hz": 4.0},
]


@pytest.fixture
def topology(tmp_path):
    topo = Topology({
        "data_dir": str(tmp_path / "data"),
        "ran": {"ues": FIXTURE_UES, "fading_stddev": 0.3, "seed": 42},
    }, ephemeral=True).start()
    yield topo
    topo.stop()


@pytest.fixture
def client(topology):
    return ControlPlaneClient(topology.control_plane_url)


class Marketplace:
    """One published RIC product with helpers to mint consumers and tokens."""

    def __init__(self, topology, client):
        self.topology = topology
        self.client = client
        self.session = requests.Session()
        product = client.publish_api({
            "name": "Near-RT RIC",
            "version": "1.0.0",
            "context": "/ric",
            "backend_url": topology.ric_sim_url,
            "operations": RIC_OPERATIONS,
        })
        client.set_lifecycle(product["api_id"], "PUBLISHED")
        # the gateway polls the catalog; pull the update now so the first
        # test call does not race the refresh gate
        topology.gateway.refresh_routes()
        self.product = product
        self.api_id = product["api_id"]

    def plan(self, **spec) -> dict:
        return self.client.create_plan(self.api_id, spec)

    def consumer(self, plan_id: str, name: str = "consumer",
                 scopes: list[str] | None = None) -> dict:
        app = self.client.register_application(name)
        sub = self.client.subscribe(app["app_id"], self.api_id, plan_id, scopes)
        return {"app": app, "sub": sub}

    def token(self, app: dict, scopes: str, audience: str = "gw-main",
              ttl: int = 600) -> str:
        resp = self.session.post(f"{self.topology.token_url}/token", json={
            "key": app["consumer_key"],
            "secret": app["consumer_secret"],
            "scope": scopes,
            "audience": audience,
            "ttl": ttl,
        }, timeout=5)
        assert resp.status_code == 200, resp.text
        return resp.json()["access_token"]

    def call(self, path: str, token: str, method: str = "GET", **kwargs):
        return self.session.request(
            method, f"{self.topology.gateway_url}{path}", timeout=10,
            headers={"Authorization": f"Bearer {token}"}, **kwargs)


@pytest.fixture
def marketplace(topology, client):
    return Marketplace(topology, client)


def pytest_runtest_logreport(report):
    # the acceptance tests each print one verdict line so the run output
    # shows every criterion's state without digging through the summary
    if "test_acceptance" not in report.nodeid:
        return
    match = re.search(r"criterion_(\d+)_(\w+)", report.nodeid)
    if match is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        verdict = "PASS" if report.passed else "FAIL"
        label = match.group(2).replace("_", " ")
        print(f"\n[acceptance] criterion {match.group(1)} ({label}): {verdict}")
