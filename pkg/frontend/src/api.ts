// Thin fetch client over the marketplace's documented REST endpoints.
// The portal renders what these return and computes nothing of record.

import type {
  Application, Deployment, Plan, Product, Subscription, TokenResponse,
  UsageSummary,
} from "./types.js";

export interface Endpoints {
  controlPlane: string;
  token: string;
  gateway: string;
}

export class ApiError extends Error {
  constructor(readonly code: string, message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class PortalClient {
  constructor(
    readonly endpoints: Endpoints,
    private readonly fetchFn: FetchLike = (url, init) => globalThis.fetch(url, init),
  ) {}

  private async request(base: string, path: string, init?: RequestInit): Promise<any> {
    let resp: Response;
    try {
      resp = await this.fetchFn(base + path, {
        ...init,
        headers: { "Content-Type": "application/json" },
      });
    } catch (err) {
      throw new ApiError("UNREACHABLE", `cannot reach ${base}: ${String(err)}`, 0);
    }
    const body = resp.status === 204 ? null : await resp.json().catch(() => null);
    if (!resp.ok) {
      throw new ApiError(body?.error ?? "ERROR",
                         body?.message ?? `HTTP ${resp.status}`, resp.status);
    }
    return body;
  }

  private cp(path: string, init?: RequestInit): Promise<any> {
    return this.request(this.endpoints.controlPlane, path, init);
  }

  async catalog(): Promise<Product[]> {
    return (await this.cp("/catalog")).products;
  }

  publishApi(descriptor: object): Promise<Product> {
    return this.cp("/admin/apis",
                   { method: "POST", body: JSON.stringify(descriptor) });
  }

  createPlan(apiId: string, spec: object): Promise<Plan> {
    return this.cp(`/admin/apis/${encodeURIComponent(apiId)}/plans`,
                   { method: "POST", body: JSON.stringify(spec) });
  }

  registerApp(name: string): Promise<Application> {
    return this.cp("/admin/apps",
                   { method: "POST", body: JSON.stringify({ name }) });
  }

  subscribe(appId: string, apiId: string, planId: string,
            scopes?: string[]): Promise<Subscription> {
    return this.cp("/admin/subscriptions", {
      method: "POST",
      body: JSON.stringify({ app_id: appId, api_id: apiId, plan_id: planId,
                             ...(scopes ? { scopes } : {}) }),
    });
  }

  async deployments(env?: string): Promise<Deployment[]> {
    const query = env ? `?env=${encodeURIComponent(env)}` : "";
    return (await this.cp(`/admin/deployments/status${query}`)).deployments;
  }

  async usage(period: string, subId?: string): Promise<UsageSummary[]> {
    const params = new URLSearchParams({ period });
    if (subId) params.set("sub", subId);
    return (await this.cp(`/admin/usage?${params}`)).summaries;
  }

  issueToken(key: string, secret: string, scope: string,
             audience: string): Promise<TokenResponse> {
    return this.request(this.endpoints.token, "/token", {
      method: "POST",
      body: JSON.stringify({ key, secret, scope, audience }),
    });
  }
}
