"""Boot the whole marketplace on loopback: control plane, token service,
gateway and the RAN simulator, each behind its own HTTP server.

Used by ``bazaar serve all``, the demo and the test suite. Port 0 in the
config picks a free port, so multiple topologies can coexist.

Config document (all keys optional)::

    {
      "host": "127.0.0.1",
      "ports": {"control_plane": 8470, "token": 8471,
                "gateway": 8472, "ric_sim": 8473},
      "keys": {"dev": "bazaar-dev-secret-change-me"},
      "active_key": "dev",
      "gateway_id": "gw-main",
      "token_issuer": "bazaar-token",
      "data_dir": "bazaar-data",      // event log + usage log live here
      "catalog_poll_s": 5.0,
      "lookup_ttl_s": 1.0,
      "ran": {"seed": 7, "ues": [...], ...}   // forwarded to the RAN sim
    }
"""

from __future__ import annotations

import copy
import json
import os

from .control_plane import ControlPlane, ControlPlaneApp, ControlPlaneClient
from .gateway import Gateway, GatewayConfig
from .httpd import HttpServer
from .ric_sim import RicSim, RicSimApp
from .tokens import RemoteDirectory, TokenService, TokenServiceApp

DEFAULT_CONFIG = {
    "host": "127.0.0.1",
    "ports": {"control_plane": 8470, "token": 8471, "gateway": 8472, "ric_sim": 8473},
    "keys": {"dev": "bazaar-dev-secret-change-me"},
    "active_key": "dev",
    "gateway_id": "gw-main",
    "token_issuer": "bazaar-token",
    "data_dir": "bazaar-data",
    "catalog_poll_s": 5.0,
    "lookup_ttl_s": 1.0,
    "ran": {},
}


def load_config(path: str | None = None) -> dict:
    """Defaults, overlaid with the JSON file at ``path`` or $BAZAAR_CONFIG."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    path = path or os.environ.get("BAZAAR_CONFIG")
    if path:
        with open(path, encoding="utf-8") as fh:
            overrides = json.load(fh)
        for name, value in overrides.items():
            if isinstance(value, dict) and isinstance(config.get(name), dict):
                config[name].update(value)
            else:
                config[name] = value
    return config


class Topology:
    """All four services, started together and stopped together."""

    def __init__(self, config: dict | None = None, ephemeral: bool = False):
        self.config = copy.deepcopy(DEFAULT_CONFIG)
        for name, value in (config or {}).items():
            if isinstance(value, dict) and isinstance(self.config.get(name), dict):
                self.config[name].update(value)
            else:
                self.config[name] = value
        if ephemeral:
            self.config["ports"] = {name: 0 for name in self.config["ports"]}
        self.store: ControlPlane | None = None
        self.ric: RicSim | None = None
        self.ric_app: RicSimApp | None = None
        self.gateway: Gateway | None = None
        self._servers: list[HttpServer] = []

    def start(self) -> "Topology":
        cfg = self.config
        host = cfg["host"]
        data_dir = cfg["data_dir"]
        os.makedirs(data_dir, exist_ok=True)
        self.usage_log_path = os.path.join(data_dir, "usage.ndjson")
        event_log_path = os.path.join(data_dir, "events.ndjson")

        self.store = ControlPlane(event_log_path)
        control_app = ControlPlaneApp(self.store, usage_log_path=self.usage_log_path)
        self._control = HttpServer(control_app, host, cfg["ports"]["control_plane"],
                                   name="control-plane").start()
        self._servers.append(self._control)

        self.ric = RicSim()
        if cfg["ran"]:
            self.ric.configure(cfg["ran"])
        self.ric_app = RicSimApp(self.ric)
        self._ric = HttpServer(self.ric_app, host, cfg["ports"]["ric_sim"],
                               name="ric-sim").start()
        self._servers.append(self._ric)

        keys = {kid: value.encode("utf-8") for kid, value in cfg["keys"].items()}
        directory = RemoteDirectory(ControlPlaneClient(self._control.url))
        token_service = TokenService(directory, keys, cfg["active_key"],
                                     issuer=cfg["token_issuer"])
        self._token = HttpServer(TokenServiceApp(token_service), host,
                                 cfg["ports"]["token"], name="token").start()
        self._servers.append(self._token)

        self.gateway = Gateway(GatewayConfig(
            control_plane_url=self._control.url,
            usage_log_path=self.usage_log_path,
            keys=keys,
            gateway_id=cfg["gateway_id"],
            lookup_ttl=float(cfg["lookup_ttl_s"]),
            catalog_poll_s=float(cfg["catalog_poll_s"]),
        ))
        self.gateway.start()
        self._gateway = HttpServer(self.gateway, host, cfg["ports"]["gateway"],
                                   name="gateway").start()
        self._servers.append(self._gateway)
        return self

    # --- addresses ----------------------------------------------------------

    @property
    def control_plane_url(self) -> str:
        return self._control.url

    @property
    def token_url(self) -> str:
        return self._token.url

    @property
    def gateway_url(self) -> str:
        return self._gateway.url

    @property
    def ric_sim_url(self) -> str:
        return self._ric.url

    def endpoints(self) -> dict:
        return {
            "control_plane": self.control_plane_url,
            "token": self.token_url,
            "gateway": self.gateway_url,
            "ric_sim": self.ric_sim_url,
        }

    def stop(self):
        if self.gateway is not None:
            self.gateway.stop()
        if self.ric is not None:
            self.ric.shutdown()
        for server in reversed(self._servers):
            server.stop()
        self._servers.clear()
        if self.store is not None:
            self.store.close()
