"""oran-bazaar: a self-contained API marketplace for the Open RAN ecosystem.

Services (control plane, token service, gateway, RIC simulator) run on
loopback, a deploy agent launches digital-twin packages on subscription,
and a reconciliation backend turns the gateway's usage log into billing
statements and a tamper-evident ledger.
"""

__version__ = "0.1.0"
