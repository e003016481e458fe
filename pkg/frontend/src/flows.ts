// Multi-request flows shared by the UI shell and the contract tests.

import type { PortalClient } from "./api.js";
import type { Subscription } from "./types.js";
import {
  deploymentTicker, KeyReveal, oneTimeKeyReveal, SessionCredentials,
  sessionCredentials, TickerState,
} from "./views.js";

export const POLL_INTERVAL_MS = 2000;

export interface SubscribeFlowOptions {
  appName: string;
  apiId: string;
  planId: string;
  scopes?: string[];
  env?: string;
  packageId?: string;
  maxPolls?: number;
}

export interface SubscribeFlowResult {
  session: SessionCredentials;    // what the portal keeps
  keyReveal: KeyReveal;           // what it shows once
  subscription: Subscription;
  deployment: TickerState;
}

type Sleep = (ms: number) => Promise<void>;
const realSleep: Sleep = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

export async function subscribeFlow(
  client: PortalClient,
  options: SubscribeFlowOptions,
  sleep: Sleep = realSleep,
): Promise<SubscribeFlowResult> {
  const app = await client.registerApp(options.appName);
  const keyReveal = oneTimeKeyReveal(app);
  const session = sessionCredentials(app);
  const subscription = await client.subscribe(
    app.app_id, options.apiId, options.planId, options.scopes);

  // a subscription may trigger a deployment; poll until it settles
  let deployment: TickerState = { state: "WAITING" };
  const maxPolls = options.maxPolls ?? 30;
  for (let poll = 0; poll < maxPolls; poll++) {
    deployment = deploymentTicker(
      await client.deployments(options.env), options.packageId);
    if (deployment.state !== "WAITING") break;
    await sleep(POLL_INTERVAL_MS);
  }
  return { session, keyReveal, subscription, deployment };
}
