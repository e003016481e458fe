// Pure view models. Every figure here is lifted straight from a REST body;
// the only arithmetic is presentation (the gauge percent), never a number
// of record. Keeping these DOM-free is what lets the contract tests hold
// them against the CLI's output for the same queries.

import { ApiError } from "./api.js";
import type { Application, Deployment, Plan, Product, UsageSummary } from "./types.js";

export interface CatalogCard {
  apiId: string;
  name: string;
  version: string;
  context: string;
  planBadges: string[];
}

export type CatalogView =
  | { kind: "empty" }
  | { kind: "cards"; cards: CatalogCard[] };

export function catalogView(products: Product[]): CatalogView {
  if (products.length === 0) return { kind: "empty" };
  return {
    kind: "cards",
    cards: products.map((p) => ({
      apiId: p.api_id,
      name: p.name,
      version: p.version,
      context: p.context,
      planBadges: (p.plans ?? []).map((plan) => plan.kind),
    })),
  };
}

export interface Banner {
  kind: "error";
  code: string;
  message: string;
}

export function errorBanner(err: unknown): Banner {
  if (err instanceof ApiError) {
    return { kind: "error", code: err.code, message: err.message };
  }
  return { kind: "error", code: "ERROR", message: String(err) };
}

export interface QuotaGauge {
  billable: number;
  limit: number;
  percent: number;      // presentation only: 100 * billable / limit
}

export function quotaGauge(summary: UsageSummary, plan: Plan): QuotaGauge {
  const limit = plan.quota_limit;
  return {
    billable: summary.billable_calls,
    limit,
    percent: limit > 0 ? (100 * summary.billable_calls) / limit : 0,
  };
}

export interface OutcomeRow {
  outcome: string;
  count: number;
}

export function outcomeRows(summary: UsageSummary): OutcomeRow[] {
  return Object.keys(summary.counts).sort()
    .map((outcome) => ({ outcome, count: summary.counts[outcome] }));
}

export interface SlaBadge {
  p95: number | null;
  targetMs: number;
  breached: boolean;
}

export function slaBadge(summary: UsageSummary, plan: Plan): SlaBadge {
  const p95 = summary.p95_latency_ms;
  return {
    p95,
    targetMs: plan.sla_latency_ms,
    breached: p95 !== null && p95 > plan.sla_latency_ms,
  };
}

export interface KeyReveal {
  consumerKey: string;
  consumerSecret: string;
  notice: string;
}

// the secret's only appearance; nothing downstream of this keeps it
export function oneTimeKeyReveal(app: Application): KeyReveal {
  return {
    consumerKey: app.consumer_key,
    consumerSecret: app.consumer_secret ?? "",
    notice: "Store the consumer secret now. It is shown once and not retrievable.",
  };
}

export interface SessionCredentials {
  appId: string;
  consumerKey: string;
}

export function sessionCredentials(app: Application): SessionCredentials {
  return { appId: app.app_id, consumerKey: app.consumer_key };
}

export type TickerState =
  | { state: "WAITING" }
  | { state: "RUNNING" | "FAILED"; deployment: Deployment };

export function deploymentTicker(deployments: Deployment[],
                                 packageId?: string): TickerState {
  const relevant = packageId
    ? deployments.filter((d) => d.package_id === packageId)
    : deployments;
  for (const deployment of relevant) {
    if (deployment.status === "RUNNING" || deployment.status === "FAILED") {
      return { state: deployment.status, deployment };
    }
  }
  return { state: "WAITING" };
}
