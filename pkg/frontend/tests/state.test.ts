import { afterEach, describe, expect, it, vi } from "vitest";

import { api } from "../src/api.js";
import type { ServiceStatus, VersionRow } from "../src/api.js";
import { renderHistory, renderValidation } from "../src/render.js";
import { Store, canRollBack, pendingCandidate } from "../src/state.js";
import { installFetchStub } from "./mock.js";

const SERVICE = "drifty";

function statusBody(state: ServiceStatus["pipeline_state"], version: number): ServiceStatus {
  return {
    service_name: SERVICE,
    learned_classes: 4,
    current_accuracy: 0.91,
    drift_magnitude: 0.2,
    deployed_version: version,
    pipeline_state: state,
  };
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("approve flow", () => {
  it("renders the history row as deployed within two poll cycles of approval", async () => {
    // Miniature gateway: v2 is a pending candidate until POST approve
    // lands, after which polls return the deployed lineage.
    let approved = false;
    const history = (): VersionRow[] =>
      approved
        ? [
            { version_id: 1, status: "archived", created_at: 0, scenario: "OFFLINE", verdict: "accepted" },
            { version_id: 2, status: "deployed", created_at: 299, scenario: "NC", verdict: "accepted" },
          ]
        : [
            { version_id: 1, status: "deployed", created_at: 0, scenario: "OFFLINE", verdict: "accepted" },
            { version_id: 2, status: "candidate", created_at: 299, scenario: "NC", verdict: "pending_manual" },
          ];

    const stub = installFetchStub();
    stub.on(`GET /v1/services/${SERVICE}/status`, () => ({
      status: 200,
      body: statusBody(approved ? "serving" : "validating", approved ? 2 : 1),
    }));
    stub.on(`GET /v1/services/${SERVICE}/history`, () => ({ status: 200, body: history() }));
    stub.on(`GET /v1/services/${SERVICE}/drift?limit=50`, () => ({ status: 200, body: [] }));
    stub.on(`POST /v1/versions/2/approve`, () => {
      approved = true;
      return { status: 200, body: { version_id: 2, status: "deployed", verdict: "accepted" } };
    });

    const store = new Store(api, SERVICE);
    await store.tick();
    expect(pendingCandidate(store.vm.history)?.version_id).toBe(2);
    expect(store.vm.status?.pipeline_state).toBe("validating");

    await store.approve(2, "alice");
    // No optimistic update: the gateway has confirmed, but the panels keep
    // showing the last polled state until the next cycle returns it.
    expect(store.vm.history[1].status).toBe("candidate");
    expect(store.vm.actionError).toBeNull();

    await store.tick(); // first poll cycle after the approval (two allowed)
    expect(store.vm.history[1].status).toBe("deployed");
    expect(store.vm.status?.pipeline_state).toBe("serving");
    expect(store.vm.status?.deployed_version).toBe(2);

    const html = renderHistory(store.vm.history, false, null);
    expect(html).toContain(`badge-deployed`);
    expect(html).not.toContain(`badge-candidate`);
  });

  it("keeps at most one mutation in flight per entity, queueing the rest", async () => {
    const stub = installFetchStub();
    stub.on(`POST /v1/versions/2/approve`, () => ({
      status: 200,
      body: { version_id: 2, status: "deployed", verdict: "accepted" },
    }));

    const store = new Store(api, SERVICE);
    await Promise.all([
      store.approve(2, "alice"),
      store.approve(2, "alice"),
      store.approve(2, "alice"),
    ]);
    expect(stub.maxInflight()).toBe(1);
    // Queued, not dropped: each click still reaches the gateway, in order.
    expect(stub.calls).toEqual([
      `POST /v1/versions/2/approve`,
      `POST /v1/versions/2/approve`,
      `POST /v1/versions/2/approve`,
    ]);
  });

  it("control: requests issued without the store do overlap", async () => {
    // Guards the assertion above against passing vacuously: the stub's
    // concurrency meter must be able to see overlap when it exists.
    const stub = installFetchStub();
    stub.on(`GET /probe`, () => ({ status: 200, body: {} }));
    await Promise.all([fetch("/probe"), fetch("/probe"), fetch("/probe")]);
    expect(stub.maxInflight()).toBe(3);
  });

  it("surfaces a gateway conflict verbatim instead of guessing state", async () => {
    const stub = installFetchStub();
    stub.on(`POST /v1/versions/2/approve`, () => ({
      status: 409,
      body: { code: "conflict", message: "version 2 has status deployed, expected candidate" },
    }));
    const store = new Store(api, SERVICE);
    await store.approve(2, "alice");
    expect(store.vm.actionError).toEqual({
      code: "conflict",
      message: "version 2 has status deployed, expected candidate",
      field: undefined,
    });
  });
});

describe("rollback preconditions", () => {
  const base = { created_at: 0, scenario: "OFFLINE", verdict: "accepted" };

  it("mirrors the gateway: enabled only when an archived version exists", () => {
    expect(canRollBack([{ version_id: 1, status: "deployed", ...base }])).toBe(false);
    expect(
      canRollBack([
        { version_id: 1, status: "archived", ...base },
        { version_id: 2, status: "deployed", ...base },
      ]),
    ).toBe(true);
    // A rolled-back version is not archived: a second rollback would 409.
    expect(
      canRollBack([
        { version_id: 1, status: "deployed", ...base },
        { version_id: 2, status: "rolled_back", ...base },
      ]),
    ).toBe(false);
  });

  it("renders the rollback button disabled for a single-deployment service", () => {
    const html = renderValidation(
      [{ version_id: 1, status: "deployed", ...base }],
      null,
      null,
      null,
      null,
      false,
    );
    expect(html).toContain(`data-action="rollback" disabled`);
    expect(html).toContain("Nothing archived to roll back to.");
  });
});
