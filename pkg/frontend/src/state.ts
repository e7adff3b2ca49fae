/** View model and actions. The store never patches server data locally:
 * mutations go to the gateway, and panels change only when the next poll
 * returns the confirmed state. Errors are kept verbatim for inline display. */

import {
  Api,
  ApiError,
  DriftReportEvent,
  ModelCard,
  PolicyPatch,
  ServiceStatus,
  VersionRow,
} from "./api.js";

export interface InlineError {
  code: string;
  message: string;
  field?: string;
}

export interface ViewModel {
  service: string;
  status: ServiceStatus | null;
  history: VersionRow[];
  drift: DriftReportEvent[];
  card: ModelCard | null;
  cardFor: number | null;
  newestFirst: boolean;
  asOf: Date | null;
  pollError: InlineError | null;
  actionError: InlineError | null;
  policyError: InlineError | null;
  policyNotice: string | null;
  busy: boolean;
}

export function initialState(service: string): ViewModel {
  return {
    service,
    status: null,
    history: [],
    drift: [],
    card: null,
    cardFor: null,
    newestFirst: true,
    asOf: null,
    pollError: null,
    actionError: null,
    policyError: null,
    policyNotice: null,
    busy: false,
  };
}

function toInlineError(err: unknown): InlineError {
  if (err instanceof ApiError) {
    return { code: err.code, message: err.message, field: err.field };
  }
  return { code: "error", message: String(err) };
}

export class Store {
  vm: ViewModel;
  private inflight = new Map<string, Promise<void>>();

  constructor(
    private readonly gateway: Api,
    service: string,
    private readonly clock: () => Date = () => new Date(),
  ) {
    this.vm = initialState(service);
  }

  /** One poll cycle: pull status, history and drift reports (and the open
   * model card) and replace the confirmed snapshot wholesale. */
  async tick(): Promise<void> {
    const { service, cardFor } = this.vm;
    try {
      const [status, history, drift] = await Promise.all([
        this.gateway.status(service),
        this.gateway.history(service),
        this.gateway.drift(service),
      ]);
      let card = this.vm.card;
      if (cardFor !== null) {
        card = await this.gateway.card(cardFor);
      }
      this.vm = {
        ...this.vm,
        status,
        history,
        drift,
        card,
        asOf: this.clock(),
        pollError: null,
      };
    } catch (err) {
      this.vm = { ...this.vm, pollError: toInlineError(err) };
    }
  }

  async openCard(versionId: number): Promise<void> {
    this.vm = { ...this.vm, cardFor: versionId };
    try {
      const card = await this.gateway.card(versionId);
      this.vm = { ...this.vm, card };
    } catch (err) {
      this.vm = { ...this.vm, card: null, actionError: toInlineError(err) };
    }
  }

  closeCard(): void {
    this.vm = { ...this.vm, card: null, cardFor: null };
  }

  toggleHistoryOrder(): void {
    this.vm = { ...this.vm, newestFirst: !this.vm.newestFirst };
  }

  approve(versionId: number, actor: string): Promise<void> {
    return this.mutate(`version:${versionId}`, () =>
      this.gateway.approve(versionId, actor).then(() => undefined),
    );
  }

  reject(versionId: number, actor: string): Promise<void> {
    return this.mutate(`version:${versionId}`, () =>
      this.gateway.reject(versionId, actor).then(() => undefined),
    );
  }

  rollback(actor: string): Promise<void> {
    return this.mutate(`service:${this.vm.service}`, () =>
      this.gateway.rollback(this.vm.service, actor).then(() => undefined),
    );
  }

  async savePolicy(patch: PolicyPatch): Promise<void> {
    this.vm = { ...this.vm, policyError: null, policyNotice: null };
    try {
      const echo = await this.gateway.updatePolicy(this.vm.service, patch);
      this.vm = {
        ...this.vm,
        policyNotice: `threshold ${echo.drift_policy.magnitude_threshold}, ` +
          `window ${echo.drift_policy.window_size}`,
      };
    } catch (err) {
      this.vm = { ...this.vm, policyError: toInlineError(err) };
    }
  }

  /** One in-flight mutation per entity; later clicks on the same entity
   * queue behind the current one instead of racing it. */
  private mutate(entity: string, send: () => Promise<void>): Promise<void> {
    const tail = this.inflight.get(entity) ?? Promise.resolve();
    const next = tail
      .then(async () => {
        this.vm = { ...this.vm, busy: true, actionError: null };
        try {
          await send();
        } catch (err) {
          this.vm = { ...this.vm, actionError: toInlineError(err) };
        } finally {
          this.vm = { ...this.vm, busy: false };
        }
      });
    this.inflight.set(entity, next);
    return next.finally(() => {
      if (this.inflight.get(entity) === next) {
        this.inflight.delete(entity);
      }
    });
  }
}

/** The most recent candidate awaiting a decision, if any. */
export function pendingCandidate(history: VersionRow[]): VersionRow | null {
  const pending = history.filter(
    (row) => row.status === "candidate" && row.verdict === "pending_manual",
  );
  return pending.length > 0 ? pending[pending.length - 1] : null;
}

/** Mirror of the gateway's rollback precondition: there must be an
 * archived version to return to, else the POST would 409. */
export function canRollBack(history: VersionRow[]): boolean {
  return history.some((row) => row.status === "archived");
}

export function sortedHistory(history: VersionRow[], newestFirst: boolean): VersionRow[] {
  const rows = [...history].sort(
    (a, b) => a.created_at - b.created_at || a.version_id - b.version_id,
  );
  return newestFirst ? rows.reverse() : rows;
}
