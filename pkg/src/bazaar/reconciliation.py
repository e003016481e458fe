"""Usage aggregation, billing, settlement ledger and log/backend reconciliation.

Everything downstream of the gateway's usage log lives here: turning raw
NDJSON records into per-subscription summaries, pricing those summaries
under a monetization plan, anchoring batches of records in a hash-chained
ledger, and cross-checking the gateway's forwarded counts against what the
backends actually saw.
"""

from __future__ import annotations

import calendar
import datetime as dt
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Protocol

from .errors import EmptyBatch, PlanMismatch
from .gateway import OUTCOMES, RECORD_FIELDS
from .money import format_micro, multiply_micro

GENESIS_HASH = "0" * 64


# --- periods and log reading -------------------------------------------------

def parse_period(period: str) -> tuple[dt.datetime, dt.datetime]:
    """Expand ``YYYY-MM``, ``YYYY-MM-DD`` or ``YYYY-MM-DDTHH`` to a UTC
    half-open interval [start, end)."""
    if not period:
        raise ValueError("period is required")
    try:
        if len(period) == 7:
            start = dt.datetime.strptime(period, "%Y-%m").replace(tzinfo=dt.timezone.utc)
            days = calendar.monthrange(start.year, start.month)[1]
            end = start + dt.timedelta(days=days)
        elif len(period) == 10:
            start = dt.datetime.strptime(period, "%Y-%m-%d").replace(tzinfo=dt.timezone.utc)
            end = start + dt.timedelta(days=1)
        elif len(period) == 13:
            start = dt.datetime.strptime(period, "%Y-%m-%dT%H").replace(tzinfo=dt.timezone.utc)
            end = start + dt.timedelta(hours=1)
        else:
            raise ValueError
    except ValueError:
        raise ValueError(
            f"period must be YYYY-MM, YYYY-MM-DD or YYYY-MM-DDTHH, got {period!r}"
        ) from None
    return start, end


def parse_record_timestamp(value: str) -> dt.datetime:
    return dt.datetime.strptime(value, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=dt.timezone.utc)


def read_usage_log(path: str) -> list[dict]:
    """Load every record from an NDJSON usage log; missing file is empty."""
    if not os.path.exists(path):
        return []
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad usage record: {exc}") from exc
    return records


# --- aggregation --------------------------------------------------------------

def percentile_nearest_rank(samples: list[float], fraction: float) -> float:
    """Nearest-rank percentile: the ceil(fraction * n)-th smallest sample."""
    if not samples:
        raise ValueError("no samples")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    ordered = sorted(samples)
    rank = math.ceil(fraction * len(ordered))
    return ordered[rank - 1]


@dataclass
class UsageSummary:
    sub_id: str
    api_id: str
    period_start: str
    period_end: str
    counts: dict = field(default_factory=dict)
    latency_samples: list = field(default_factory=list)   # FORWARDED only

    @property
    def billable_calls(self) -> int:
        return self.counts.get("FORWARDED", 0)

    @property
    def total_calls(self) -> int:
        return sum(self.counts.values())

    def percentile(self, fraction: float) -> float | None:
        if not self.latency_samples:
            return None
        return percentile_nearest_rank(self.latency_samples, fraction)

    def merge(self, other: "UsageSummary") -> "UsageSummary":
        """Combine two summaries for the same subscription; latency samples
        are kept raw exactly so percentiles stay exact after merging."""
        if (self.sub_id, self.api_id) != (other.sub_id, other.api_id):
            raise ValueError("cannot merge summaries of different subscriptions")
        merged = UsageSummary(
            sub_id=self.sub_id,
            api_id=self.api_id,
            period_start=min(self.period_start, other.period_start),
            period_end=max(self.period_end, other.period_end),
        )
        for outcome in OUTCOMES:
            total = self.counts.get(outcome, 0) + other.counts.get(outcome, 0)
            if total:
                merged.counts[outcome] = total
        merged.latency_samples = self.latency_samples + other.latency_samples
        return merged

    def to_json(self) -> dict:
        p95 = self.percentile(0.95)
        return {
            "sub_id": self.sub_id,
            "api_id": self.api_id,
            "period_start": self.period_start,
            "period_end": self.period_end,
            "counts": dict(self.counts),
            "total_calls": self.total_calls,
            "billable_calls": self.billable_calls,
            "p95_latency_ms": p95,
        }


def aggregate_usage(records: list[dict], period: tuple[dt.datetime, dt.datetime],
                    sub_id: str | None = None) -> list[UsageSummary]:
    """Group records by subscription within [start, end), counting outcomes."""
    start, end = period
    fmt = "%Y-%m-%dT%H:%M:%SZ"
    summaries: dict[tuple[str, str], UsageSummary] = {}
    for record in records:
        when = parse_record_timestamp(record["timestamp"])
        if not start <= when < end:
            continue
        if sub_id is not None and record["sub_id"] != sub_id:
            continue
        key = (record["sub_id"], record["api_id"])
        summary = summaries.get(key)
        if summary is None:
            summary = summaries[key] = UsageSummary(
                sub_id=key[0], api_id=key[1],
                period_start=start.strftime(fmt), period_end=end.strftime(fmt),
            )
        outcome = record["outcome"]
        summary.counts[outcome] = summary.counts.get(outcome, 0) + 1
        if outcome == "FORWARDED" and record.get("upstream_latency_ms") is not None:
            summary.latency_samples.append(float(record["upstream_latency_ms"]))
    return sorted(summaries.values(), key=lambda s: (s.sub_id, s.api_id))


# --- billing ------------------------------------------------------------------

def _line(description: str, quantity: int, unit_price_micro: int) -> dict:
    amount = unit_price_micro * quantity
    return {
        "description": description,
        "quantity": quantity,
        "unit_price": format_micro(unit_price_micro),
        "unit_price_micro": unit_price_micro,
        "amount": format_micro(amount),
        "amount_micro": amount,
    }


def compute_charges(summary: UsageSummary, plan: dict) -> dict:
    """Price one summary under a plan; all arithmetic in integer micro-units.

    PAY_PER_USE: unit rate times billable calls. FLAT_FEE: the fee,
    usage-independent. QUOTA: flat fee plus unit rate on calls beyond the
    included quota. SLA_TIERED: flat fee, minus a fractional credit when the
    plan's latency percentile over forwarded calls exceeds the target.
    """
    kind = plan["kind"]
    billable = summary.billable_calls
    lines = []
    extra: dict = {}
    if kind == "PAY_PER_USE":
        lines.append(_line("API calls", billable, int(plan["unit_rate_micro"])))
    elif kind == "FLAT_FEE":
        lines.append(_line("flat fee", 1, int(plan["flat_fee_micro"])))
    elif kind == "QUOTA":
        lines.append(_line("flat fee", 1, int(plan["flat_fee_micro"])))
        overage = max(0, billable - int(plan["quota_limit"]))
        if overage:
            lines.append(_line("overage calls", overage, int(plan["unit_rate_micro"])))
        extra["overage_calls"] = overage
    elif kind == "SLA_TIERED":
        fee = int(plan["flat_fee_micro"])
        lines.append(_line("flat fee", 1, fee))
        observed = summary.percentile(float(plan["sla_percentile"]))
        breached = observed is not None and observed > float(plan["sla_latency_ms"])
        credit = 0
        if breached:
            credit = multiply_micro(fee, float(plan["sla_credit_fraction"]))
            lines.append(_line("SLA latency credit", 1, -credit))
        extra.update(sla_observed_ms=observed, sla_breached=breached,
                     sla_credit_micro=credit)
    else:
        raise PlanMismatch(f"cannot bill plan kind {kind!r}")
    total = sum(item["amount_micro"] for item in lines)
    return {
        "sub_id": summary.sub_id,
        "api_id": summary.api_id,
        "plan_id": plan["plan_id"],
        "kind": kind,
        "billable_calls": billable,
        "period_start": summary.period_start,
        "period_end": summary.period_end,
        "line_items": lines,
        **extra,
        "total_micro": total,
        "total": format_micro(total),
    }


# --- settlement ledger ----------------------------------------------------------

def _canonical_record(record: dict) -> str:
    return json.dumps({name: record.get(name) for name in RECORD_FIELDS},
                      separators=(",", ":"))


def records_digest(records: list[dict]) -> str:
    hasher = hashlib.sha256()
    for record in records:
        hasher.update(_canonical_record(record).encode("utf-8"))
        hasher.update(b"\n")
    return hasher.hexdigest()


def _block_hash(index: int, prev_hash: str, digest: str) -> str:
    return hashlib.sha256(f"{index}{prev_hash}{digest}".encode("ascii")).hexdigest()


def read_ledger(path: str) -> list[dict]:
    if not os.path.exists(path):
        return []
    blocks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                blocks.append(json.loads(line))
    return blocks


def append_ledger(path: str, records: list[dict]) -> dict:
    """Append one block anchoring ``records`` to the chain at ``path``."""
    if not records:
        raise EmptyBatch("refusing to anchor an empty batch")
    blocks = read_ledger(path)
    index = len(blocks)
    prev_hash = blocks[-1]["block_hash"] if blocks else GENESIS_HASH
    digest = records_digest(records)
    block = {
        "index": index,
        "prev_hash": prev_hash,
        "records_digest": digest,
        "block_hash": _block_hash(index, prev_hash, digest),
    }
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(block) + "\n")
        fh.flush()
    return block


def verify_ledger(path: str, batches: list[list[dict]] | None = None) -> dict:
    """Walk the chain; report ok or the line index of the first bad block.

    When ``batches`` is given (one record batch per block, in order), each
    block's digest is also recomputed from the source records, so tampering
    with the records themselves is caught too.
    """
    prev_hash = GENESIS_HASH
    # frame strictly on "\n": splitlines() also breaks on \x0b and friends,
    # so a flipped separator byte would re-frame cleanly and verify
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for position, line in enumerate(lines):
        try:
            block = json.loads(line)
            index = block["index"]
            digest = block["records_digest"]
            stated_prev = block["prev_hash"]
            stated_hash = block["block_hash"]
        except (json.JSONDecodeError, TypeError, KeyError):
            return {"ok": False, "first_bad_index": position}
        if index != position or stated_prev != prev_hash:
            return {"ok": False, "first_bad_index": position}
        if batches is not None:
            if position >= len(batches) or records_digest(batches[position]) != digest:
                return {"ok": False, "first_bad_index": position}
        if _block_hash(index, stated_prev, digest) != stated_hash:
            return {"ok": False, "first_bad_index": position}
        prev_hash = stated_hash
    return {"ok": True, "blocks": len(lines)}


class SettlementSink(Protocol):
    """Anything that can durably accept a priced statement."""

    def publish(self, statement: dict) -> None: ...


class FileSettlementSink:
    """Appends statements to an NDJSON file; the demo's settlement target."""

    def __init__(self, path: str):
        self.path = path

    def publish(self, statement: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(statement) + "\n")


# --- reconciliation -------------------------------------------------------------

def reconcile(gateway_records: list[dict], backend_counts: dict[str, int]) -> list[dict]:
    """Compare forwarded counts per API against backend-side observations.

    Returns one entry per api_id where the two sides disagree; an empty
    list means the meter and the backends tell the same story.
    """
    forwarded: dict[str, int] = {}
    for record in gateway_records:
        if record["outcome"] == "FORWARDED":
            forwarded[record["api_id"]] = forwarded.get(record["api_id"], 0) + 1
    discrepancies = []
    for api_id in sorted(set(forwarded) | set(backend_counts)):
        gw = forwarded.get(api_id, 0)
        be = int(backend_counts.get(api_id, 0))
        if gw != be:
            discrepancies.append({
                "api_id": api_id,
                "gateway_count": gw,
                "backend_count": be,
                "delta": gw - be,
            })
    return discrepancies
