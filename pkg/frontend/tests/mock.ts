/** Tiny fetch stub: tests register route handlers, the real `api` client
 * runs against them unchanged, so these tests exercise the exact request
 * and parsing paths the browser uses. */

import { vi } from "vitest";

export interface StubResponse {
  status: number;
  body?: unknown;
}

export type RouteHandler = (init?: RequestInit) => StubResponse;

export interface FetchStub {
  /** Register a handler for `METHOD path` (query string included). */
  on(route: string, handler: RouteHandler): void;
  calls: string[];
  /** Highest number of requests that were ever in flight at once. A
   * request counts from the moment fetch is entered until its handler
   * has produced a response. */
  maxInflight(): number;
}

export function installFetchStub(): FetchStub {
  const routes = new Map<string, RouteHandler>();
  const calls: string[] = [];
  let inflight = 0;
  let peak = 0;

  vi.stubGlobal(
    "fetch",
    async (url: string, init?: RequestInit): Promise<Response> => {
      const method = init?.method ?? "GET";
      const key = `${method} ${url}`;
      calls.push(key);
      const handler = routes.get(key);
      if (handler === undefined) {
        throw new Error(`no stub for ${key}`);
      }
      inflight += 1;
      peak = Math.max(peak, inflight);
      await Promise.resolve(); // yield, so overlapping requests are observable
      const { status, body } = handler(init);
      inflight -= 1;
      if (status === 204) {
        return new Response(null, { status });
      }
      return new Response(JSON.stringify(body), {
        status,
        headers: { "content-type": "application/json" },
      });
    },
  );

  return {
    on: (route, handler) => routes.set(route, handler),
    calls,
    maxInflight: () => peak,
  };
}
