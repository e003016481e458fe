import { describe, expect, it } from "vitest";
import { ApiError } from "../src/api.js";
import {
  catalogView, deploymentTicker, errorBanner, oneTimeKeyReveal, outcomeRows,
  quotaGauge, sessionCredentials, slaBadge,
} from "../src/views.js";
import { fixture } from "./helpers.js";

const products = fixture.catalog.products;

describe("catalog view", () => {
  it("renders one card per published product", () => {
    const view = catalogView(products);
    expect(view.kind).toBe("cards");
    if (view.kind !== "cards") return;
    expect(view.cards).toHaveLength(products.length);
    expect(products.every((p) => p.lifecycle === "PUBLISHED")).toBe(true);
    view.cards.forEach((card, i) => {
      expect(card.apiId).toBe(products[i].api_id);
      expect(card.name).toBe(products[i].name);
      expect(card.context).toBe(products[i].context);
    });
  });

  it("badges each card with its plan kinds", () => {
    const view = catalogView(products);
    if (view.kind !== "cards") throw new Error("expected cards");
    view.cards.forEach((card, i) => {
      expect(card.planBadges).toEqual(
        (products[i].plans ?? []).map((plan) => plan.kind));
    });
    const all = view.cards.flatMap((card) => card.planBadges);
    expect(all).toContain("QUOTA");
    expect(all).toContain("SLA_TIERED");
  });

  it("collapses an empty catalog to the empty state", () => {
    expect(catalogView([])).toEqual({ kind: "empty" });
  });
});

describe("analytics views", () => {
  const quotaSummary = fixture.usage.quota.summaries[0];
  const cliQuota = fixture.cli.quota[0];

  it("quota gauge shows the endpoint's numbers and the CLI agrees", () => {
    const gauge = quotaGauge(quotaSummary, fixture.plans.quota);
    expect(gauge.billable).toBe(cliQuota.billable_calls);
    expect(gauge.limit).toBe(fixture.plans.quota.quota_limit);
    expect(gauge.percent).toBe(
      (100 * cliQuota.billable_calls) / fixture.plans.quota.quota_limit);
  });

  it("gauge stays finite on a zero limit", () => {
    const plan = { ...fixture.plans.quota, quota_limit: 0 };
    expect(quotaGauge(quotaSummary, plan).percent).toBe(0);
  });

  it("outcome rows mirror the CLI aggregation for the same query", () => {
    const rows = outcomeRows(quotaSummary);
    const asCounts = Object.fromEntries(rows.map((r) => [r.outcome, r.count]));
    expect(asCounts).toEqual(cliQuota.counts);
    expect(rows.map((r) => r.outcome)).toEqual(
      rows.map((r) => r.outcome).slice().sort());
  });

  it("flags the SLA breach the backend reported", () => {
    const summary = fixture.usage.sla.summaries[0];
    const badge = slaBadge(summary, fixture.plans.sla);
    expect(badge.p95).toBe(fixture.cli.sla[0].p95_latency_ms);
    expect(badge.targetMs).toBe(fixture.plans.sla.sla_latency_ms);
    expect(badge.breached).toBe(true);
  });

  it("does not flag when p95 is under target or absent", () => {
    const summary = fixture.usage.sla.summaries[0];
    const fast = { ...summary, p95_latency_ms: fixture.plans.sla.sla_latency_ms };
    expect(slaBadge(fast, fixture.plans.sla).breached).toBe(false);
    const silent = { ...summary, p95_latency_ms: null };
    expect(slaBadge(silent, fixture.plans.sla).breached).toBe(false);
  });
});

describe("credentials", () => {
  it("the reveal carries the secret once; the session never does", () => {
    const app = fixture.register_app;
    const reveal = oneTimeKeyReveal(app);
    expect(reveal.consumerKey).toBe(app.consumer_key);
    expect(reveal.consumerSecret).toBe(app.consumer_secret);
    expect(reveal.notice).toMatch(/shown once/);

    const session = sessionCredentials(app);
    expect(session).toEqual({ appId: app.app_id, consumerKey: app.consumer_key });
    expect(JSON.stringify(session)).not.toContain(app.consumer_secret!);
  });
});

describe("deployment ticker", () => {
  it("waits while nothing has settled", () => {
    expect(deploymentTicker(fixture.deployments.before.deployments))
      .toEqual({ state: "WAITING" });
  });

  it("reports the settled deployment", () => {
    const ticker = deploymentTicker(fixture.deployments.after.deployments);
    expect(ticker.state).toBe("RUNNING");
    if (ticker.state === "WAITING") throw new Error("expected a deployment");
    expect(ticker.deployment.package_id).toBe("ran-digital-twin");
  });

  it("filters by package id", () => {
    const settled = fixture.deployments.after.deployments;
    expect(deploymentTicker(settled, "ran-digital-twin").state).toBe("RUNNING");
    expect(deploymentTicker(settled, "some-other-package"))
      .toEqual({ state: "WAITING" });
  });
});

describe("error banner", () => {
  it("passes API error codes through", () => {
    const banner = errorBanner(new ApiError("DENIED_QUOTA", "quota exhausted", 429));
    expect(banner).toEqual(
      { kind: "error", code: "DENIED_QUOTA", message: "quota exhausted" });
  });

  it("wraps anything else as a plain error", () => {
    const banner = errorBanner(new TypeError("fetch failed"));
    expect(banner.code).toBe("ERROR");
    expect(banner.message).toContain("fetch failed");
  });
});
