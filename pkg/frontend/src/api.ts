/** Typed client for the driftctl gateway. Every function maps to exactly
 * one route; response bodies are passed through untouched so the panels
 * render what the gateway said, never a client-side reconstruction. */

export interface ServiceStatus {
  service_name: string;
  learned_classes: number;
  current_accuracy: number | null;
  drift_magnitude: number;
  deployed_version: number | null;
  pipeline_state: "serving" | "validating";
}

export type VersionStatus =
  | "candidate"
  | "deployed"
  | "rejected"
  | "rolled_back"
  | "archived";

export interface VersionRow {
  version_id: number;
  status: VersionStatus;
  created_at: number;
  scenario: string;
  verdict: string | null;
}

export interface KsMarginal {
  statistic_d: number;
  p_value: number;
  n: number;
  m: number;
}

export interface DriftReportEvent {
  kind: "drift_report";
  t_ms: number;
  window_id: number;
  magnitude: number;
  per_feature_ks: KsMarginal[];
  eddm_level: string;
  new_class_fraction: number;
  triggered: boolean;
}

export interface ValidationDetails {
  decision: string;
  holdout_acc_new: number;
  holdout_acc_old: number;
  ab: Record<string, number> | null;
  reasons: string[];
}

export interface ManifestSelection {
  time_range: number[];
  class_filter: number[];
  record_ids: number[];
  seed: number;
  shortfall: number;
}

export interface DataManifest {
  manifest_id: string;
  selection: ManifestSelection;
  counts: { new: number; rehearsal: number };
  content_digest: string;
}

export interface BenchmarkReport {
  acc_matrix: number[][];
  bwt: number | null;
  final_acc: number;
  ms_efficiency: number;
  ce_efficiency: number;
  wall_clock_per_task: number[];
}

export interface ModelCard {
  version_id: number;
  parent_id: number | null;
  status: VersionStatus;
  created_at: number;
  verdict: string | null;
  loss_config: Record<string, unknown>;
  scenario: string;
  benchmark: BenchmarkReport | null;
  data_manifest: DataManifest;
  sql: string;
  validation: ValidationDetails;
}

export interface ActionResult {
  version_id: number;
  status: VersionStatus;
  verdict: string | null;
}

export interface RollbackResult {
  deployed_version: number;
  status: VersionStatus;
}

export interface PolicyEcho {
  drift_policy: {
    detectors: string[];
    window_size: number;
    check_interval: number;
    magnitude_threshold: number;
    min_errors_warmup: number;
  };
  validation_policy: {
    holdout_fraction: number;
    max_accuracy_drop: number;
    min_accuracy: number;
    ab_significance: number;
    require_manual_approval: boolean;
  };
}

export type PolicyPatch = {
  drift_policy?: Partial<PolicyEcho["drift_policy"]>;
  validation_policy?: Partial<PolicyEcho["validation_policy"]>;
};

/** Gateway error body: `{code, message, field?}` on every non-2xx. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly field?: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(path, init);
  } catch (err) {
    throw new ApiError(0, "network", `gateway unreachable: ${String(err)}`);
  }
  if (response.status === 204) {
    return undefined as T;
  }
  let body: unknown = null;
  try {
    body = await response.json();
  } catch {
    // fall through: a non-JSON body on an error still raises below
  }
  if (!response.ok) {
    const err = (body ?? {}) as { code?: string; message?: string; field?: string };
    throw new ApiError(
      response.status,
      err.code ?? "error",
      err.message ?? `request failed with status ${response.status}`,
      err.field,
    );
  }
  return body as T;
}

function post<T>(path: string, payload: unknown): Promise<T> {
  const headers: Record<string, string> = { "content-type": "application/json" };
  // Retried clicks replay the stored response instead of re-executing.
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) {
    headers["idempotency-key"] = crypto.randomUUID();
  }
  return request<T>(path, {
    method: "POST",
    headers,
    body: JSON.stringify(payload),
  });
}

export const api = {
  status(service: string): Promise<ServiceStatus> {
    return request(`/v1/services/${encodeURIComponent(service)}/status`);
  },
  history(service: string): Promise<VersionRow[]> {
    return request(`/v1/services/${encodeURIComponent(service)}/history`);
  },
  drift(service: string, limit = 50): Promise<DriftReportEvent[]> {
    return request(`/v1/services/${encodeURIComponent(service)}/drift?limit=${limit}`);
  },
  card(versionId: number): Promise<ModelCard> {
    return request(`/v1/versions/${versionId}/card`);
  },
  approve(versionId: number, actor: string): Promise<ActionResult> {
    return post(`/v1/versions/${versionId}/approve`, { actor });
  },
  reject(versionId: number, actor: string): Promise<ActionResult> {
    return post(`/v1/versions/${versionId}/reject`, { actor });
  },
  rollback(service: string, actor: string): Promise<RollbackResult> {
    return post(`/v1/services/${encodeURIComponent(service)}/rollback`, { actor });
  },
  updatePolicy(service: string, patch: PolicyPatch): Promise<PolicyEcho> {
    return request(`/v1/services/${encodeURIComponent(service)}/policy`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(patch),
    });
  },
};

export type Api = typeof api;
