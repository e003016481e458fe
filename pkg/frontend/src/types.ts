// Shapes of the REST bodies the portal consumes. Only fields the portal
// actually renders are typed; everything else passes through untouched.

export interface Plan {
  plan_id: string;
  api_id: string;
  kind: string;
  quota_limit: number;
  quota_window: string;
  sla_latency_ms: number;
  sla_percentile: number;
  sla_credit_fraction: number;
  flat_fee?: string;
  unit_rate?: string;
}

export interface Product {
  api_id: string;
  name: string;
  version: string;
  context: string;
  lifecycle: string;
  plans?: Plan[];
}

export interface UsageSummary {
  sub_id: string;
  api_id: string;
  period_start: string;
  period_end: string;
  counts: Record<string, number>;
  total_calls: number;
  billable_calls: number;
  p95_latency_ms: number | null;
}

export interface Application {
  app_id: string;
  name: string;
  consumer_key: string;
  consumer_secret?: string;
}

export interface Subscription {
  sub_id: string;
  app_id: string;
  api_id: string;
  plan_id: string;
  status: string;
}

export interface Deployment {
  env_id: string;
  package_id: string;
  status: string;
  detail?: string;
}

export interface TokenResponse {
  access_token: string;
  token_type: string;
  expires_in: number;
}
