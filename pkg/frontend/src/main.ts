// Browser shell: hash-routed views over the REST client. All data shown
// comes from the view models in views.ts; this file only puts them on
// screen and wires the forms.

import { PortalClient } from "./api.js";
import type { Endpoints } from "./api.js";
import { POLL_INTERVAL_MS, subscribeFlow } from "./flows.js";
import {
  catalogView, deploymentTicker, errorBanner, outcomeRows,
  quotaGauge, slaBadge,
} from "./views.js";
import type { Banner } from "./views.js";
import type { Plan, Product } from "./types.js";

function endpointsFromLocation(): Endpoints {
  const params = new URLSearchParams(window.location.search);
  return {
    controlPlane: params.get("cp") ?? "http://127.0.0.1:8470",
    token: params.get("token") ?? "http://127.0.0.1:8471",
    gateway: params.get("gw") ?? "http://127.0.0.1:8472",
  };
}

const client = new PortalClient(endpointsFromLocation());
const app = document.getElementById("app")!;
let pollTimer: number | undefined;
let lastProducts: Product[] = [];

function esc(value: unknown): string {
  return String(value).replace(/[&<>"']/g, (ch) => ({
    "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#39;",
  }[ch]!));
}

function bannerHtml(banner: Banner): string {
  return `<div class="banner">${esc(banner.code)}: ${esc(banner.message)}</div>`;
}

function showError(err: unknown): void {
  // no stale data behind an error: the view is replaced, not annotated
  app.innerHTML = bannerHtml(errorBanner(err));
}

async function renderCatalog(): Promise<void> {
  let products: Product[];
  try {
    products = await client.catalog();
  } catch (err) {
    showError(err);
    return;
  }
  lastProducts = products;
  const view = catalogView(products);
  if (view.kind === "empty") {
    app.innerHTML = `<p class="empty">No products published yet.</p>`;
    return;
  }
  app.innerHTML = view.cards.map((card) => `
    <div class="card">
      <h3>${esc(card.name)} <small>${esc(card.version)}</small></h3>
      <code>${esc(card.context)}</code>
      <p>${card.planBadges.map((b) => `<span class="badge">${esc(b)}</span>`).join(" ")
      || "<em>no plans yet</em>"}</p>
      <p><small>${esc(card.apiId)}</small></p>
    </div>`).join("");
}

function renderPublishForm(): void {
  app.innerHTML = `
    <form id="publish">
      <h3>Publish a product</h3>
      <textarea name="descriptor" rows="12" cols="70">{
  "name": "My API",
  "version": "1.0.0",
  "context": "/my-api",
  "backend_url": "http://127.0.0.1:8473",
  "operations": [["GET", "/status", "my:read"]]
}</textarea><br>
      <button type="submit">Publish</button>
      <div id="publish-out"></div>
    </form>`;
  document.getElementById("publish")!.addEventListener("submit", async (event) => {
    event.preventDefault();
    const out = document.getElementById("publish-out")!;
    const raw = (document.querySelector("textarea[name=descriptor]") as
                 HTMLTextAreaElement).value;
    try {
      const product = await client.publishApi(JSON.parse(raw));
      out.innerHTML = `<p>Published <code>${esc(product.api_id)}</code>
        (lifecycle ${esc(product.lifecycle)}).</p>`;
    } catch (err) {
      out.innerHTML = bannerHtml(errorBanner(err));   // inline, form stays
    }
  });
}

function renderSubscribeForm(): void {
  const options = lastProducts.map((p) =>
    `<option value="${esc(p.api_id)}|${esc((p.plans ?? [])[0]?.plan_id ?? "")}">
       ${esc(p.name)}</option>`).join("");
  app.innerHTML = `
    <form id="subscribe">
      <h3>Subscribe</h3>
      <input name="app-name" placeholder="application name" required>
      <select name="product">${options}</select>
      <button type="submit">Subscribe</button>
      <div id="subscribe-out"></div>
    </form>`;
  document.getElementById("subscribe")!.addEventListener("submit", async (event) => {
    event.preventDefault();
    const out = document.getElementById("subscribe-out")!;
    const name = (document.querySelector("input[name=app-name]") as
                  HTMLInputElement).value;
    const [apiId, planId] = (document.querySelector("select[name=product]") as
                             HTMLSelectElement).value.split("|");
    if (!planId) {
      out.innerHTML = bannerHtml({ kind: "error", code: "NO_PLAN",
                                   message: "product has no plan to subscribe to" });
      return;
    }
    out.innerHTML = "<p>Subscribing…</p>";
    try {
      const result = await subscribeFlow(client,
                                         { appName: name, apiId, planId, maxPolls: 5 });
      const ticker = result.deployment.state === "WAITING"
        ? "no deployment triggered"
        : `deployment ${esc(result.deployment.deployment.package_id)} is
           ${esc(result.deployment.state)}`;
      out.innerHTML = `
        <p>Subscription <code>${esc(result.subscription.sub_id)}</code>
          is ${esc(result.subscription.status)}; ${ticker}.</p>
        <div class="reveal">
          <p>${esc(result.keyReveal.notice)}</p>
          <p>key <code>${esc(result.keyReveal.consumerKey)}</code><br>
             secret <code>${esc(result.keyReveal.consumerSecret)}</code></p>
        </div>`;
      // only key + app id are retained for the session
      sessionStorage.setItem("bazaar-session", JSON.stringify(result.session));
    } catch (err) {
      out.innerHTML = bannerHtml(errorBanner(err));
    }
  });
}

async function renderAnalytics(): Promise<void> {
  const params = new URLSearchParams(window.location.hash.split("?")[1] ?? "");
  const subId = params.get("sub") ?? "";
  const period = params.get("period")
    ?? new Date().toISOString().slice(0, 7);    // current month
  if (!subId) {
    app.innerHTML = `<p>Append <code>?sub=&lt;sub_id&gt;&amp;period=YYYY-MM</code>
      to the URL hash to view analytics.</p>`;
    return;
  }
  let summaries, deployments;
  try {
    if (lastProducts.length === 0) {
      lastProducts = await client.catalog();    // plans drive gauge/SLA lookup
    }
    [summaries, deployments] = await Promise.all([
      client.usage(period, subId), client.deployments()]);
  } catch (err) {
    showError(err);
    return;
  }
  if (summaries.length === 0) {
    app.innerHTML = `<p class="empty">No usage recorded for
      ${esc(subId)} in ${esc(period)}.</p>`;
    return;
  }
  const summary = summaries[0];
  const plan = findPlan(summary.api_id);
  const rows = outcomeRows(summary).map((row) =>
    `<tr><td>${esc(row.outcome)}</td><td>${row.count}</td></tr>`).join("");
  let gaugeHtml = "";
  if (plan?.kind === "QUOTA") {
    const gauge = quotaGauge(summary, plan);
    gaugeHtml = `<p>Quota: ${gauge.billable} of ${gauge.limit}
      (<progress max="100" value="${gauge.percent}"></progress>
      ${gauge.percent.toFixed(0)}%)</p>`;
  }
  let slaHtml = "";
  if (plan?.kind === "SLA_TIERED") {
    const badge = slaBadge(summary, plan);
    slaHtml = `<p>p95 ${badge.p95 ?? "n/a"} ms vs target ${badge.targetMs} ms
      ${badge.breached ? '<span class="badge breach">SLA BREACH</span>' : ""}</p>`;
  }
  const ticker = deploymentTicker(deployments);
  app.innerHTML = `
    <h3>${esc(subId)} in ${esc(period)}</h3>
    <table><tr><th>outcome</th><th>count</th></tr>${rows}</table>
    ${gaugeHtml}${slaHtml}
    <p>Deployments: ${ticker.state === "WAITING" ? "none settled"
      : `${esc(ticker.deployment.package_id)} ${esc(ticker.state)}`}</p>`;
}

function findPlan(apiId: string): Plan | undefined {
  for (const product of lastProducts) {
    for (const plan of product.plans ?? []) {
      if (plan.api_id === apiId) return plan;
    }
  }
  return undefined;
}

async function route(): Promise<void> {
  if (pollTimer !== undefined) {
    clearInterval(pollTimer);
    pollTimer = undefined;
  }
  const hash = window.location.hash.split("?")[0] || "#/catalog";
  if (hash === "#/publish") {
    renderPublishForm();
  } else if (hash === "#/subscribe") {
    await renderCatalog().catch(() => undefined);   // refresh product list
    renderSubscribeForm();
  } else if (hash === "#/analytics") {
    await renderAnalytics();
    pollTimer = window.setInterval(renderAnalytics, POLL_INTERVAL_MS);
  } else {
    await renderCatalog();
    pollTimer = window.setInterval(renderCatalog, POLL_INTERVAL_MS);
  }
}

window.addEventListener("hashchange", route);
route().catch(showError);
