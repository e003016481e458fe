"""Pipeline behavior through a live loopback topology.

Each test reads back the usage log to check that exactly the expected
records were written, since metering completeness is the whole point.
"""

import json
import os
import time

import requests

from bazaar.gateway import RECORD_FIELDS
from bazaar.httpd import HttpServer, Response


def read_log(topology):
    path = topology.usage_log_path
    if not os.path.exists(path):
        return []
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def pay_plan(marketplace, **extra):
    spec = {"kind": "PAY_PER_USE", "unit_rate": "0.01"}
    spec.update(extra)
    return marketplace.plan(**spec)


def test_forwarded_call_relays_backend_and_meters(marketplace, topology):
    plan = pay_plan(marketplace)
    consumer = marketplace.consumer(plan["plan_id"])
    token = marketplace.token(consumer["app"], "ric:read")

    resp = marketplace.call("/ric/A1-P/v2/policytypes", token)
    assert resp.status_code == 200
    assert resp.json() == [20008]

    records = read_log(topology)
    assert len(records) == 1
    rec = records[0]
    assert tuple(rec.keys()) == RECORD_FIELDS
    assert rec["outcome"] == "FORWARDED"
    assert rec["sub_id"] == consumer["sub"]["sub_id"]
    assert rec["api_id"] == marketplace.api_id
    assert rec["operation"] == "GET /A1-P/v2/policytypes"
    assert rec["upstream_latency_ms"] > 0
    assert rec["response_bytes"] == len(resp.content)


def test_path_params_and_query_reach_backend(marketplace):
    plan = pay_plan(marketplace)
    consumer = marketplace.consumer(plan["plan_id"])
    token = marketplace.token(consumer["app"], "ric:read ric:policy")
    put = marketplace.call("/ric/A1-P/v2/policytypes/20008/policies/p1", token,
                           method="PUT", json={"scheduler": "PROPORTIONAL_FAIR"})
    assert put.status_code in (200, 201)
    got = marketplace.call("/ric/A1-P/v2/policytypes/20008/policies/p1", token)
    assert got.json()["scheduler"] == "PROPORTIONAL_FAIR"


def test_no_route_is_metered_with_dash_sub(marketplace, topology):
    resp = marketplace.session.get(f"{marketplace.topology.gateway_url}/nowhere")
    assert resp.status_code == 404
    assert resp.json()["error"] == "NO_ROUTE"
    rec = read_log(topology)[-1]
    assert rec["sub_id"] == "-" and rec["api_id"] == "-"
    assert rec["outcome"] == "DENIED_AUTH"
    assert rec["operation"] == "GET /nowhere"


def test_unknown_operation_within_context_is_no_route(marketplace, topology):
    plan = pay_plan(marketplace)
    consumer = marketplace.consumer(plan["plan_id"])
    token = marketplace.token(consumer["app"], "ric:read")
    resp = marketplace.call("/ric/A1-P/v2/unknown", token, method="DELETE")
    assert resp.status_code == 404
    assert resp.json()["error"] == "NO_ROUTE"
    rec = read_log(topology)[-1]
    assert rec["api_id"] == marketplace.api_id  # route known, operation not
    assert rec["outcome"] == "DENIED_AUTH"


def test_missing_and_invalid_tokens(marketplace, topology):
    url = f"{marketplace.topology.gateway_url}/ric/A1-P/v2/policytypes"
    bare = marketplace.session.get(url)
    assert bare.status_code == 401
    assert bare.json()["error"] == "TOKEN_MISSING"
    assert bare.headers["WWW-Authenticate"] == "Bearer"

    garbage = marketplace.session.get(url, headers={"Authorization": "Bearer xx.yy.zz"})
    assert garbage.status_code == 401
    assert garbage.json()["error"] == "TOKEN_INVALID"

    outcomes = [r["outcome"] for r in read_log(topology)]
    assert outcomes == ["DENIED_AUTH", "DENIED_AUTH"]


def test_wrong_audience_token_rejected(marketplace):
    plan = pay_plan(marketplace)
    consumer = marketplace.consumer(plan["plan_id"])
    token = marketplace.token(consumer["app"], "ric:read", audience="some-other-gw")
    resp = marketplace.call("/ric/A1-P/v2/policytypes", token)
    assert resp.status_code == 401
    assert resp.json()["error"] == "TOKEN_INVALID"


def test_no_subscription_is_403(marketplace, topology):
    app = marketplace.client.register_application("floater")
    token = marketplace.token(app, "")
    resp = marketplace.call("/ric/A1-P/v2/policytypes", token)
    assert resp.status_code == 403
    assert resp.json()["error"] == "NO_SUBSCRIPTION"
    assert read_log(topology)[-1]["outcome"] == "DENIED_AUTH"


def test_revoked_subscription_is_denied_subscription(marketplace, topology):
    plan = pay_plan(marketplace)
    consumer = marketplace.consumer(plan["plan_id"])
    token = marketplace.token(consumer["app"], "ric:read")
    assert marketplace.call("/ric/A1-P/v2/policytypes", token).status_code == 200

    marketplace.client.revoke_subscription(consumer["sub"]["sub_id"])
    deadline = time.time() + 3  # lookup cache holds the old view for <= 1 s
    while time.time() < deadline:
        resp = marketplace.call("/ric/A1-P/v2/policytypes", token)
        if resp.status_code == 403:
            break
        time.sleep(0.1)
    assert resp.status_code == 403
    assert resp.json()["error"] == "SUBSCRIPTION_INACTIVE"
    assert read_log(topology)[-1]["outcome"] == "DENIED_SUBSCRIPTION"


def test_scope_enforced_per_operation(marketplace, topology):
    plan = pay_plan(marketplace)
    consumer = marketplace.consumer(plan["plan_id"], scopes=["ric:read"])
    token = marketplace.token(consumer["app"], "ric:read")
    resp = marketplace.call("/ric/A1-P/v2/policytypes/20008/policies/p0", token,
                            method="PUT", json={"scheduler": "ROUND_ROBIN"})
    assert resp.status_code == 403
    assert resp.json()["error"] == "SCOPE_DENIED"
    rec = read_log(topology)[-1]
    assert rec["outcome"] == "DENIED_SCOPE"
    assert rec["sub_id"] == consumer["sub"]["sub_id"]


def test_throttle_denies_above_burst(marketplace, topology):
    plan = pay_plan(marketplace, throttle_rate=1, throttle_burst=2)
    consumer = marketplace.consumer(plan["plan_id"])
    token = marketplace.token(consumer["app"], "ric:read")
    statuses = [marketplace.call("/ric/A1-P/v2/policytypes", token).status_code
                for _ in range(3)]
    assert statuses == [200, 200, 429]
    last = marketplace.call("/ric/A1-P/v2/policytypes", token)
    assert last.json()["error"] == "RATE_LIMITED"
    outcomes = [r["outcome"] for r in read_log(topology)]
    assert outcomes == ["FORWARDED", "FORWARDED", "DENIED_THROTTLE", "DENIED_THROTTLE"]


def test_quota_exhausts_and_is_not_refilled_by_denials(marketplace, topology):
    plan = marketplace.plan(kind="QUOTA", flat_fee="1.00", quota_limit=3,
                            quota_window="MONTH", overage_rate="0.05")
    consumer = marketplace.consumer(plan["plan_id"])
    token = marketplace.token(consumer["app"], "ric:read")
    statuses = [marketplace.call("/ric/A1-P/v2/policytypes", token).status_code
                for _ in range(6)]
    assert statuses == [200, 200, 200, 429, 429, 429]
    resp = marketplace.call("/ric/A1-P/v2/policytypes", token)
    assert resp.json()["error"] == "QUOTA_EXCEEDED"
    forwarded = [r for r in read_log(topology) if r["outcome"] == "FORWARDED"]
    assert len(forwarded) == 3


def test_backend_unreachable_releases_quota_reservation(topology, client, marketplace):
    # a product whose backend port is closed
    dead = client.publish_api({
        "name": "dead", "context": "/dead", "backend_url": "http://127.0.0.1:9",
        "operations": [["GET", "/x", "dead:read"]],
    })
    client.set_lifecycle(dead["api_id"], "PUBLISHED")
    plan = client.create_plan(dead["api_id"], {
        "kind": "QUOTA", "flat_fee": "1.00", "quota_limit": 1,
        "quota_window": "MONTH", "overage_rate": "0.05"})
    topology.gateway.refresh_routes()
    app = client.register_application("deadapp")
    sub = client.subscribe(app["app_id"], dead["api_id"], plan["plan_id"])
    token = marketplace.token(app, "dead:read")

    first = marketplace.call("/dead/x", token)
    assert first.status_code == 502
    assert first.json()["error"] == "BACKEND_UNREACHABLE"
    # the failed call must not consume the quota of 1
    second = marketplace.call("/dead/x", token)
    assert second.status_code == 502

    records = [r for r in read_log(topology) if r["sub_id"] == sub["sub_id"]]
    assert [r["outcome"] for r in records] == ["BACKEND_ERROR", "BACKEND_ERROR"]


def test_backend_5xx_is_relayed_and_counts_as_forwarded(topology, client, marketplace):
    def failing_app(request):
        return Response.json({"boom": True}, status=503)

    backend = HttpServer(failing_app, name="failing").start()
    try:
        prod = client.publish_api({
            "name": "flaky", "context": "/flaky", "backend_url": backend.url,
            "operations": [["GET", "/x", "flaky:read"]],
        })
        client.set_lifecycle(prod["api_id"], "PUBLISHED")
        plan = client.create_plan(prod["api_id"], {"kind": "PAY_PER_USE", "unit_rate": "0.01"})
        topology.gateway.refresh_routes()
        app = client.register_application("flakyapp")
        sub = client.subscribe(app["app_id"], prod["api_id"], plan["plan_id"])
        token = marketplace.token(app, "flaky:read")

        resp = marketplace.call("/flaky/x", token)
        assert resp.status_code == 503
        assert resp.json() == {"boom": True}
        rec = [r for r in read_log(topology) if r["sub_id"] == sub["sub_id"]][-1]
        assert rec["outcome"] == "FORWARDED"  # the backend answered; it bills
    finally:
        backend.stop()


def test_forward_strips_auth_and_adds_identity_headers(topology, client, marketplace):
    seen = {}

    def echo_app(request):
        seen.update(request.headers)
        return Response.json({"ok": True})

    backend = HttpServer(echo_app, name="echo").start()
    try:
        prod = client.publish_api({
            "name": "echo", "context": "/echo", "backend_url": backend.url,
            "operations": [["GET", "/x", "echo:read"]],
        })
        client.set_lifecycle(prod["api_id"], "PUBLISHED")
        plan = client.create_plan(prod["api_id"], {"kind": "FLAT_FEE", "flat_fee": "1"})
        topology.gateway.refresh_routes()
        app = client.register_application("echoapp")
        sub = client.subscribe(app["app_id"], prod["api_id"], plan["plan_id"])
        token = marketplace.token(app, "echo:read")

        resp = marketplace.session.get(
            f"{topology.gateway_url}/echo/x",
            headers={"Authorization": f"Bearer {token}", "X-Custom": "kept"})
        assert resp.status_code == 200
        assert "authorization" not in seen
        assert seen["x-custom"] == "kept"
        assert seen["x-sub-id"] == sub["sub_id"]
        assert len(seen["x-request-id"]) == 32
    finally:
        backend.stop()


def test_metering_failure_fails_closed(marketplace, topology):
    plan = pay_plan(marketplace)
    consumer = marketplace.consumer(plan["plan_id"])
    token = marketplace.token(consumer["app"], "ric:read")
    assert marketplace.call("/ric/A1-P/v2/policytypes", token).status_code == 200
    before = marketplace.session.get(
        f"{topology.ric_sim_url}/internal/request-count").json()["total"]

    # break the meter: a directory at the log path defeats append even as root
    log_path = topology.usage_log_path
    moved = log_path + ".moved"
    os.rename(log_path, moved)
    os.mkdir(log_path)
    try:
        resp = marketplace.call("/ric/A1-P/v2/policytypes", token)
        assert resp.status_code == 503
        assert resp.json()["error"] == "METERING_UNAVAILABLE"
        after = marketplace.session.get(
            f"{topology.ric_sim_url}/internal/request-count").json()["total"]
        assert after == before  # never forwarded while unmeterable
    finally:
        os.rmdir(log_path)
        os.rename(moved, log_path)

    ok = marketplace.call("/ric/A1-P/v2/policytypes", token)
    assert ok.status_code == 200
    assert read_log(topology)[-1]["outcome"] == "FORWARDED"


def test_options_preflight_bypasses_pipeline(marketplace, topology):
    resp = marketplace.session.options(
        f"{marketplace.topology.gateway_url}/ric/A1-P/v2/policytypes",
        headers={"Origin": "http://localhost:5173",
                 "Access-Control-Request-Method": "GET"})
    assert resp.status_code == 204
    assert resp.headers["Access-Control-Allow-Origin"] == "*"
    assert read_log(topology) == []  # preflight is free


def test_newly_published_api_becomes_routable_without_restart(topology, client, marketplace):
    prod = client.publish_api({
        "name": "late", "context": "/late", "backend_url": topology.ric_sim_url,
        "operations": [["GET", "/A1-P/v2/policytypes", "late:read"]],
    })
    client.set_lifecycle(prod["api_id"], "PUBLISHED")
    plan = client.create_plan(prod["api_id"], {"kind": "FLAT_FEE", "flat_fee": "1"})
    app = client.register_application("lateapp")
    client.subscribe(app["app_id"], prod["api_id"], plan["plan_id"])
    token = marketplace.token(app, "late:read")

    deadline = time.time() + 5  # refresh-on-miss closes the gap well under this
    while time.time() < deadline:
        resp = marketplace.call("/late/A1-P/v2/policytypes", token)
        if resp.status_code == 200:
            break
        time.sleep(0.1)
    assert resp.status_code == 200


def test_retired_api_stops_routing(marketplace, client):
    plan = pay_plan(marketplace)
    consumer = marketplace.consumer(plan["plan_id"])
    token = marketplace.token(consumer["app"], "ric:read")
    assert marketplace.call("/ric/A1-P/v2/policytypes", token).status_code == 200

    client.set_lifecycle(marketplace.api_id, "RETIRED")
    deadline = time.time() + 8  # catalog poll interval is 5 s
    while time.time() < deadline:
        resp = marketplace.call("/ric/A1-P/v2/policytypes", token)
        if resp.status_code == 404:
            break
        time.sleep(0.2)
    assert resp.status_code == 404
    assert resp.json()["error"] == "NO_ROUTE"


def test_deprecated_api_still_routes(marketplace, client):
    plan = pay_plan(marketplace)
    consumer = marketplace.consumer(plan["plan_id"])
    token = marketplace.token(consumer["app"], "ric:read")
    client.set_lifecycle(marketplace.api_id, "DEPRECATED")
    time.sleep(0.1)
    assert marketplace.call("/ric/A1-P/v2/policytypes", token).status_code == 200


def test_pipeline_order_scope_beats_throttle(marketplace, topology):
    # a plan with zero burst would throttle every call, but the scope
    # check sits earlier in the pipeline and must win
    plan = pay_plan(marketplace, throttle_rate=0.001, throttle_burst=1)
    consumer = marketplace.consumer(plan["plan_id"], scopes=["ric:read"])
    token = marketplace.token(consumer["app"], "ric:read")
    for _ in range(2):
        resp = marketplace.call("/ric/A1-P/v2/policytypes/20008/policies/p9",
                                token, method="PUT", json={"scheduler": "ROUND_ROBIN"})
        assert resp.json()["error"] == "SCOPE_DENIED"
    outcomes = [r["outcome"] for r in read_log(topology)]
    assert outcomes == ["DENIED_SCOPE", "DENIED_SCOPE"]
