/** Browser entry point: mounts the console, polls the gateway once a
 * second, and wires user actions through the store. Renders replace the
 * whole tree from confirmed state; the two text inputs survive re-renders
 * by value capture, not by skipping the render. */

import { api } from "./api.js";
import { driftReportsCsv } from "./format.js";
import { renderApp } from "./render.js";
import { Store } from "./state.js";

const POLL_INTERVAL_MS = 1000;

function serviceFromLocation(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("service") ?? "default";
}

function mount(): void {
  const root = document.getElementById("app");
  if (root === null) {
    throw new Error("missing #app mount point");
  }
  const store = new Store(api, serviceFromLocation());

  const preserved = ["actor", "magnitude-threshold"];

  function render(): void {
    const values = new Map<string, string>();
    let focusedId: string | null = null;
    for (const id of preserved) {
      const input = document.getElementById(id) as HTMLInputElement | null;
      if (input !== null) {
        values.set(id, input.value);
        if (document.activeElement === input) {
          focusedId = id;
        }
      }
    }
    root!.innerHTML = renderApp(store.vm);
    for (const [id, value] of values) {
      const input = document.getElementById(id) as HTMLInputElement | null;
      if (input !== null) {
        input.value = value;
        if (focusedId === id) {
          input.focus();
        }
      }
    }
  }

  function actor(): string {
    const input = document.getElementById("actor") as HTMLInputElement | null;
    return input?.value.trim() ?? "";
  }

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const button = target.closest<HTMLElement>("[data-action]");
    if (button !== null) {
      const action = button.dataset["action"];
      const version = Number(button.dataset["version"] ?? "0");
      if (action === "approve" || action === "reject") {
        const who = actor();
        if (who === "") {
          store.vm = {
            ...store.vm,
            actionError: { code: "invalid", message: "enter a name first", field: "actor" },
          };
          render();
          return;
        }
        const call = action === "approve" ? store.approve(version, who) : store.reject(version, who);
        void call.then(() => store.tick()).then(render);
        return;
      }
      if (action === "rollback") {
        const who = actor();
        if (who === "") {
          store.vm = {
            ...store.vm,
            actionError: { code: "invalid", message: "enter a name first", field: "actor" },
          };
          render();
          return;
        }
        void store.rollback(who).then(() => store.tick()).then(render);
        return;
      }
      if (action === "sort-history") {
        store.toggleHistoryOrder();
        render();
        return;
      }
      if (action === "close-card") {
        store.closeCard();
        render();
        return;
      }
      if (action === "copy-sql") {
        const sql = store.vm.card?.sql ?? "";
        void navigator.clipboard.writeText(sql);
        return;
      }
      if (action === "download-drift") {
        const blob = new Blob([driftReportsCsv(store.vm.drift)], { type: "text/csv" });
        const url = URL.createObjectURL(blob);
        const link = document.createElement("a");
        link.href = url;
        link.download = `${store.vm.service}-drift.csv`;
        link.click();
        URL.revokeObjectURL(url);
        return;
      }
    }
    const row = target.closest<HTMLTableRowElement>("tr[data-version]");
    if (row !== null) {
      void store.openCard(Number(row.dataset["version"])).then(render);
    }
  });

  root.addEventListener("submit", (event) => {
    const form = event.target as HTMLFormElement;
    if (form.id !== "policy-form") {
      return;
    }
    event.preventDefault();
    const input = document.getElementById("magnitude-threshold") as HTMLInputElement | null;
    const raw = input?.value ?? "";
    const threshold = Number(raw);
    void store
      .savePolicy({ drift_policy: { magnitude_threshold: threshold } })
      .then(render);
  });

  void store.tick().then(render);
  window.setInterval(() => {
    void store.tick().then(render);
  }, POLL_INTERVAL_MS);
}

mount();
