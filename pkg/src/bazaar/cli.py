"""bazaar: run marketplace services and drive every workflow headless.

Verbs: serve, api publish/lifecycle/plan, app register, sub create/revoke,
token issue/decode, deploy apply/status, dt run, usage aggregate,
bill compute, ledger append/verify, reconcile, demo e2e.

Machine-readable JSON goes to stdout; diagnostics to stderr. Exit codes:
0 success, 1 domain error (stable "error" code in the JSON), 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
import time

import requests

from . import reconciliation, tokens, twin
from .control_plane import ControlPlaneClient
from .deploy_agent import DeployAgent, EnvironmentRuntime, fetch_config
from .demo import run_demo
from .errors import BazaarError
from .topology import Topology, load_config

log = logging.getLogger("bazaar.cli")


def _endpoints(config: dict) -> dict:
    host = config["host"]
    derived = {name: f"http://{host}:{port}" for name, port in config["ports"].items()}
    derived.update(config.get("endpoints", {}))
    return derived


def _load_json_file(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _emit(args, payload):
    if args.output == "table":
        print(_as_table(payload))
    else:
        print(json.dumps(payload, indent=2))


def _as_table(payload) -> str:
    if isinstance(payload, list):
        if not payload:
            return "(empty)"
        if all(isinstance(row, dict) for row in payload):
            columns: list[str] = []
            for row in payload:
                columns.extend(k for k in row if k not in columns)
            widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in payload))
                      for c in columns}
            head = "  ".join(c.ljust(widths[c]) for c in columns)
            lines = [head, "-" * len(head)]
            lines += ["  ".join(str(r.get(c, "")).ljust(widths[c]) for c in columns)
                      for r in payload]
            return "\n".join(lines)
        return "\n".join(str(item) for item in payload)
    if isinstance(payload, dict):
        width = max((len(k) for k in payload), default=0)
        return "\n".join(f"{k.ljust(width)}  {_cell(v)}" for k, v in payload.items())
    return str(payload)


def _cell(value) -> str:
    if isinstance(value, (dict, list)):
        return json.dumps(value)
    return str(value)


# --- serve -------------------------------------------------------------------

def cmd_serve(args) -> int:
    config = load_config(args.config)
    if args.service == "all":
        topo = Topology(config).start()
        print(json.dumps(topo.endpoints(), indent=2))
        sys.stderr.write("serving; Ctrl-C to stop\n")
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            topo.stop()
        return 0

    # single services share the topology wiring but start only one server
    from .control_plane import ControlPlane, ControlPlaneApp
    from .gateway import Gateway, GatewayConfig
    from .httpd import HttpServer
    from .ric_sim import RicSimApp
    from .tokens import RemoteDirectory, TokenService, TokenServiceApp

    endpoints = _endpoints(config)
    host = config["host"]
    keys = {kid: v.encode("utf-8") for kid, v in config["keys"].items()}
    os.makedirs(config["data_dir"], exist_ok=True)
    usage_log = os.path.join(config["data_dir"], "usage.ndjson")

    if args.service == "control-plane":
        store = ControlPlane(os.path.join(config["data_dir"], "events.ndjson"))
        app = ControlPlaneApp(store, usage_log_path=usage_log)
        server = HttpServer(app, host, config["ports"]["control_plane"], name="control-plane")
    elif args.service == "token":
        directory = RemoteDirectory(ControlPlaneClient(endpoints["control_plane"]))
        service = TokenService(directory, keys, config["active_key"],
                               issuer=config["token_issuer"])
        server = HttpServer(TokenServiceApp(service), host, config["ports"]["token"],
                            name="token")
    elif args.service == "gateway":
        gateway = Gateway(GatewayConfig(
            control_plane_url=endpoints["control_plane"],
            usage_log_path=usage_log,
            keys=keys,
            gateway_id=config["gateway_id"],
            lookup_ttl=float(config["lookup_ttl_s"]),
            catalog_poll_s=float(config["catalog_poll_s"]),
        ))
        gateway.start()
        server = HttpServer(gateway, host, config["ports"]["gateway"], name="gateway")
    else:   # ric-sim
        server = HttpServer(RicSimApp(), host, config["ports"]["ric_sim"], name="ric-sim")

    server.start()
    print(json.dumps({args.service: server.url}))
    sys.stderr.write("serving; Ctrl-C to stop\n")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


# --- control plane verbs -------------------------------------------------------

def _client(args) -> ControlPlaneClient:
    return ControlPlaneClient(_endpoints(load_config(args.config))["control_plane"])


def cmd_api_publish(args) -> int:
    _emit(args, _client(args).publish_api(_load_json_file(args.file)))
    return 0


def cmd_api_lifecycle(args) -> int:
    _emit(args, _client(args).set_lifecycle(args.api_id, args.target))
    return 0


def cmd_api_plan(args) -> int:
    _emit(args, _client(args).create_plan(args.api_id, _load_json_file(args.file)))
    return 0


def cmd_app_register(args) -> int:
    payload = _client(args).register_application(args.name)
    sys.stderr.write("consumer_secret is shown once; store it now\n")
    _emit(args, payload)
    return 0


def cmd_sub_create(args) -> int:
    scopes = args.scopes.split() if args.scopes else None
    _emit(args, _client(args).subscribe(args.app_id, args.api_id, args.plan_id, scopes))
    return 0


def cmd_sub_revoke(args) -> int:
    _emit(args, _client(args).revoke_subscription(args.sub_id))
    return 0


# --- tokens ---------------------------------------------------------------------

def cmd_token_issue(args) -> int:
    config = load_config(args.config)
    resp = requests.post(f"{_endpoints(config)['token']}/token", json={
        "key": args.key,
        "secret": args.secret,
        "scope": args.scopes,
        "audience": args.audience or config["gateway_id"],
        "ttl": args.ttl,
    }, timeout=10)
    if resp.status_code >= 400:
        _emit(args, resp.json())
        return 1
    _emit(args, resp.json())
    return 0


def cmd_token_decode(args) -> int:
    header, claims = tokens.decode_unverified(args.token)
    _emit(args, {"header": header, "claims": claims})
    return 0


# --- deploy ----------------------------------------------------------------------

def cmd_deploy_apply(args) -> int:
    descriptor = fetch_config(args.file)
    agent = DeployAgent(
        environments=[EnvironmentRuntime(descriptor.env_id, args.kind)],
        control_plane=_client(args) if not args.no_report else None,
    )
    entry = agent.apply(descriptor)
    _emit(args, {"env_id": descriptor.env_id, **entry})
    return 0


def cmd_deploy_status(args) -> int:
    _emit(args, _client(args).deployment_statuses(args.env))
    return 0


# --- dt ---------------------------------------------------------------------------

def cmd_dt_run(args) -> int:
    loop_config = _load_json_file(args.file)
    if args.mode:
        loop_config["mode"] = args.mode
    endpoints = _endpoints(load_config(args.config))
    loop_config.setdefault("endpoints", {})
    loop_config["endpoints"].setdefault("gateway", endpoints["gateway"])
    loop_config["endpoints"].setdefault("token", endpoints["token"])
    _emit(args, twin.run_loop(loop_config))
    return 0


# --- usage / billing / ledger / reconcile ----------------------------------------

def _usage_log_path(args) -> str:
    if args.log:
        return args.log
    config = load_config(args.config)
    return os.path.join(config["data_dir"], "usage.ndjson")


def cmd_usage_aggregate(args) -> int:
    records = reconciliation.read_usage_log(_usage_log_path(args))
    period = reconciliation.parse_period(args.period)
    summaries = reconciliation.aggregate_usage(records, period, sub_id=args.sub)
    _emit(args, [s.to_json() for s in summaries])
    return 0


def cmd_bill_compute(args) -> int:
    records = reconciliation.read_usage_log(_usage_log_path(args))
    period = reconciliation.parse_period(args.period)
    summaries = reconciliation.aggregate_usage(records, period, sub_id=args.sub)
    plan = _load_json_file(args.plan_file)
    if "flat_fee_micro" not in plan:
        # a raw spec with money strings, not a control-plane plan record;
        # normalize it exactly the way plan creation does
        from .control_plane import _parse_plan_spec
        plan = _parse_plan_spec(plan.get("api_id", "-"), plan).to_json()
    statements = [reconciliation.compute_charges(s, plan) for s in summaries]
    _emit(args, statements[0] if len(statements) == 1 else statements)
    return 0


def cmd_ledger_append(args) -> int:
    records = reconciliation.read_usage_log(args.records)
    block = reconciliation.append_ledger(args.ledger, records)
    _emit(args, block)
    return 0


def cmd_ledger_verify(args) -> int:
    result = reconciliation.verify_ledger(args.ledger)
    _emit(args, result)
    return 0 if result["ok"] else 1


def cmd_reconcile(args) -> int:
    records = reconciliation.read_usage_log(_usage_log_path(args))
    if args.counts_file:
        backend_counts = _load_json_file(args.counts_file)
    else:
        config = load_config(args.config)
        ric = args.ric or _endpoints(config)["ric_sim"]
        resp = requests.get(f"{ric}/internal/request-count", timeout=10)
        resp.raise_for_status()
        backend_counts = {args.api: resp.json()["total"]}
    discrepancies = reconciliation.reconcile(records, backend_counts)
    _emit(args, {"discrepancies": discrepancies, "ok": not discrepancies})
    return 0


# --- demo --------------------------------------------------------------------------

def cmd_demo_e2e(args) -> int:
    _emit(args, run_demo(calls=args.calls))
    return 0


# --- wiring -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bazaar", description="API marketplace for the Open RAN ecosystem")
    parser.add_argument("--config", default=None, help="config file (or $BAZAAR_CONFIG)")
    parser.add_argument("--output", choices=("json", "table"), default="json")
    sub = parser.add_subparsers(dest="noun", required=True)

    serve = sub.add_parser("serve", help="run one service or the whole topology")
    serve.add_argument("service",
                       choices=("control-plane", "token", "gateway", "ric-sim", "all"))
    serve.set_defaults(fn=cmd_serve)

    api = sub.add_parser("api", help="publish and manage API products")
    api_sub = api.add_subparsers(dest="verb", required=True)
    p = api_sub.add_parser("publish")
    p.add_argument("-f", "--file", required=True, help="product descriptor JSON")
    p.set_defaults(fn=cmd_api_publish)
    p = api_sub.add_parser("lifecycle")
    p.add_argument("api_id")
    p.add_argument("target", choices=("PUBLISHED", "DEPRECATED", "RETIRED"))
    p.set_defaults(fn=cmd_api_lifecycle)
    p = api_sub.add_parser("plan")
    p.add_argument("api_id")
    p.add_argument("-f", "--file", required=True, help="plan spec JSON")
    p.set_defaults(fn=cmd_api_plan)

    app = sub.add_parser("app", help="consumer applications")
    app_sub = app.add_subparsers(dest="verb", required=True)
    p = app_sub.add_parser("register")
    p.add_argument("name")
    p.set_defaults(fn=cmd_app_register)

    subs = sub.add_parser("sub", help="subscriptions")
    subs_sub = subs.add_subparsers(dest="verb", required=True)
    p = subs_sub.add_parser("create")
    p.add_argument("--app-id", required=True)
    p.add_argument("--api-id", required=True)
    p.add_argument("--plan-id", required=True)
    p.add_argument("--scopes", default=None, help="space separated; default: all")
    p.set_defaults(fn=cmd_sub_create)
    p = subs_sub.add_parser("revoke")
    p.add_argument("sub_id")
    p.set_defaults(fn=cmd_sub_revoke)

    token = sub.add_parser("token", help="issue or inspect access tokens")
    token_sub = token.add_subparsers(dest="verb", required=True)
    p = token_sub.add_parser("issue")
    p.add_argument("--key", required=True)
    p.add_argument("--secret", required=True)
    p.add_argument("--scopes", default="")
    p.add_argument("--audience", default=None)
    p.add_argument("--ttl", type=int, default=600)
    p.set_defaults(fn=cmd_token_issue)
    p = token_sub.add_parser("decode")
    p.add_argument("token")
    p.set_defaults(fn=cmd_token_decode)

    deploy = sub.add_parser("deploy", help="apply descriptors, view status")
    deploy_sub = deploy.add_subparsers(dest="verb", required=True)
    p = deploy_sub.add_parser("apply")
    p.add_argument("-f", "--file", required=True, help="descriptor path or URL")
    p.add_argument("--kind", choices=("MOCK", "LOCAL_PROCESS"), default="MOCK")
    p.add_argument("--no-report", action="store_true",
                   help="do not post status to the control plane")
    p.set_defaults(fn=cmd_deploy_apply)
    p = deploy_sub.add_parser("status")
    p.add_argument("--env", default=None)
    p.set_defaults(fn=cmd_deploy_status)

    dt_cmd = sub.add_parser("dt", help="digital-twin loop")
    dt_sub = dt_cmd.add_subparsers(dest="verb", required=True)
    p = dt_sub.add_parser("run")
    p.add_argument("-f", "--file", required=True, help="loop config JSON")
    p.add_argument("--mode", choices=("A", "B"), default=None)
    p.set_defaults(fn=cmd_dt_run)

    usage = sub.add_parser("usage", help="aggregate usage records")
    usage_sub = usage.add_subparsers(dest="verb", required=True)
    p = usage_sub.add_parser("aggregate")
    p.add_argument("--period", required=True, help="YYYY-MM | YYYY-MM-DD | YYYY-MM-DDTHH")
    p.add_argument("--sub", default=None)
    p.add_argument("--log", default=None, help="usage log path (default: data dir)")
    p.set_defaults(fn=cmd_usage_aggregate)

    bill = sub.add_parser("bill", help="price usage under a plan")
    bill_sub = bill.add_subparsers(dest="verb", required=True)
    p = bill_sub.add_parser("compute")
    p.add_argument("--period", required=True)
    p.add_argument("--sub", default=None)
    p.add_argument("--plan-file", required=True, help="plan JSON as printed by api plan")
    p.add_argument("--log", default=None)
    p.set_defaults(fn=cmd_bill_compute)

    ledger = sub.add_parser("ledger", help="tamper-evident record anchoring")
    ledger_sub = ledger.add_subparsers(dest="verb", required=True)
    p = ledger_sub.add_parser("append")
    p.add_argument("--records", required=True, help="NDJSON usage records to anchor")
    p.add_argument("--ledger", required=True)
    p.set_defaults(fn=cmd_ledger_append)
    p = ledger_sub.add_parser("verify")
    p.add_argument("--ledger", required=True)
    p.set_defaults(fn=cmd_ledger_verify)

    rec = sub.add_parser("reconcile", help="compare gateway metering with backends")
    rec.add_argument("--log", default=None)
    rec.add_argument("--api", default=None, help="api_id the backend serves")
    rec.add_argument("--ric", default=None, help="backend URL (default from config)")
    rec.add_argument("--counts-file", default=None,
                     help="JSON {api_id: count}; overrides --api/--ric")
    rec.set_defaults(fn=cmd_reconcile)

    demo = sub.add_parser("demo", help="scripted end-to-end flows")
    demo_sub = demo.add_subparsers(dest="verb", required=True)
    p = demo_sub.add_parser("e2e")
    p.add_argument("--calls", type=int, default=250)
    p.set_defaults(fn=cmd_demo_e2e)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("BAZAAR_LOG", "WARNING"),
                        stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BazaarError as exc:
        print(json.dumps(exc.to_json()))
        return 1
    except ValueError as exc:
        print(json.dumps({"error": "INVALID_ARGUMENT", "message": str(exc)}))
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "FILE_NOT_FOUND", "message": str(exc)}))
        return 1
    except requests.RequestException as exc:
        print(json.dumps({"error": "UNREACHABLE", "message": str(exc)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
