// Fixture loading and a scripted fetch stub. The fixture is a recording of
// real responses from a live marketplace (see fixtures/record.py); tests
// replay it so they verify the portal against what the backend actually
// sends, not against hand-written bodies.

import { readFileSync } from "node:fs";
import type { Endpoints, FetchLike } from "../src/api.js";
import type {
  Application, Deployment, Plan, Product, Subscription, UsageSummary,
} from "../src/types.js";

export interface ErrorBody {
  error: string;
  message: string;
}

export interface Fixture {
  recorded_at: string;
  period: string;
  catalog: { products: Product[] };
  plans: { quota: Plan; sla: Plan };
  publish_invalid: { status: number; body: ErrorBody };
  register_app: Application;
  subscribe: {
    response: Subscription;
    duplicate: { status: number; body: ErrorBody };
  };
  deployments: {
    before: { deployments: Deployment[] };
    after: { deployments: Deployment[] };
  };
  usage: {
    quota: { summaries: UsageSummary[] };
    sla: { summaries: UsageSummary[] };
  };
  cli: { quota: UsageSummary[]; sla: UsageSummary[] };
}

export const fixture = JSON.parse(readFileSync(
  new URL("./fixtures/topology.json", import.meta.url), "utf8")) as Fixture;

export const endpoints: Endpoints = {
  controlPlane: "http://cp.test",
  token: "http://token.test",
  gateway: "http://gw.test",
};

export interface Recorded {
  status?: number;
  body: unknown;
}

export interface Replay {
  fetchFn: FetchLike;
  calls: { url: string; init?: RequestInit }[];
  remaining: () => number;
}

export function replayFetch(script: Recorded[]): Replay {
  const queue = [...script];
  const calls: Replay["calls"] = [];
  const fetchFn: FetchLike = async (url, init) => {
    calls.push({ url, init });
    const step = queue.shift();
    if (!step) throw new Error(`no recorded response for ${url}`);
    return new Response(JSON.stringify(step.body), {
      status: step.status ?? 200,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetchFn, calls, remaining: () => queue.length };
}
