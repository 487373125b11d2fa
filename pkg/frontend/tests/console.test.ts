import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, Progress, ValidationReport } from "../src/api.js";
import {
  chartRows,
  renderChiSquaredChart,
  renderConsole,
  renderDatasetTable,
} from "../src/render.js";
import { ConsoleController, effectivePriority } from "../src/state.js";

/**
 * In-memory stand-in for the production service: answers the same routes
 * the console uses and mutates its progress snapshot the way the real
 * campaign does, so "next poll reflects the action" is testable.
 */
class FakeService {
  calls: { method: string; path: string; body?: unknown }[] = [];
  progress: Progress = {
    simulated_time: 120,
    finished: false,
    datasets: [
      {
        dataset_id: 1,
        process: "dijet",
        priority: "high",
        group_in_charge: "higgs",
        status: "running",
        events_requested: 1000,
        events_generated: 400,
        events_simulated: 250,
        time_per_event_si95s: 13000,
      },
      {
        dataset_id: 2,
        process: "minbias",
        priority: "medium",
        group_in_charge: "production",
        status: "requested",
        events_requested: 500,
        events_generated: 0,
        events_simulated: 0,
        time_per_event_si95s: 4000,
      },
    ],
    sites: {
      cern: {
        processors: 8,
        capacity_si95: 336,
        busy_seconds: 700,
        utilization: 0.73,
        events: 250,
      },
    },
    retries: 0,
    expired_invocations: 0,
    derivations_done: 5,
    derivations_total: 12,
  };
  planState = "running";
  failNext: { code: string; message: string } | null = null;

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.calls.push({ method, path: url, body });

    if (this.failNext) {
      const err = this.failNext;
      this.failNext = null;
      return json(422, { error: err });
    }
    if (method === "GET" && url === "/v1/progress") {
      return json(200, this.progress);
    }
    const priority = url.match(/^\/v1\/datasets\/(\d+)\/priority$/);
    if (method === "PATCH" && priority) {
      const row = this.progress.datasets.find(
        (d) => d.dataset_id === Number(priority[1]),
      );
      if (!row) {
        return json(404, {
          error: { code: "unknown_dataset", message: priority[1] },
        });
      }
      row.priority = body.priority;
      return json(200, { dataset_id: row.dataset_id, priority: body.priority });
    }
    if (method === "POST" && /^\/v1\/plans\/\d+\/pause$/.test(url)) {
      this.planState = "paused";
      // in-flight batch drains; utilization decays on the next snapshot
      this.progress.sites.cern.utilization = 0;
      return json(200, { state: "paused" });
    }
    if (method === "POST" && /^\/v1\/plans\/\d+\/run$/.test(url)) {
      this.planState = "running";
      return json(200, { state: "running" });
    }
    if (method === "POST" && /^\/v1\/derivations\/\d+\/retry$/.test(url)) {
      this.progress.retries += 1;
      return json(200, { status: "retried" });
    }
    return json(404, { error: { code: "unknown", message: url } });
  };
}

function json(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "content-type": "application/json" },
  });
}

let service: FakeService;
let controller: ConsoleController;

beforeEach(() => {
  service = new FakeService();
  controller = new ConsoleController(new ApiClient("", service.fetch));
});

describe("polling", () => {
  it("renders only server truth", async () => {
    await controller.poll();
    const html = renderConsole(controller.state);
    expect(html).toContain("dijet");
    expect(html).toContain("data-site=\"cern\"");
    expect(html).toContain("5/12");
  });

  it("is stateless across remounts", async () => {
    await controller.poll();
    const first = renderConsole(controller.state);
    const fresh = new ConsoleController(new ApiClient("", service.fetch));
    await fresh.poll();
    expect(renderConsole(fresh.state)).toEqual(first);
  });
});

describe("priority edit round-trip", () => {
  it("issues exactly one PATCH and the next poll reflects it", async () => {
    await controller.poll();
    await controller.setPriority(1, "very_high");

    const patches = service.calls.filter((c) => c.method === "PATCH");
    expect(patches).toEqual([
      {
        method: "PATCH",
        path: "/v1/datasets/1/priority",
        body: { priority: "very_high" },
      },
    ]);

    await controller.poll();
    const row = controller.state.progress!.datasets[0];
    expect(row.priority).toBe("very_high");
    // the optimistic edit is dropped once the server confirms
    expect(controller.state.pendingPriorities.size).toBe(0);
    expect(renderDatasetTable(controller.state)).toContain(
      '<option value="very_high" selected>',
    );
  });

  it("shows the optimistic value until the poll confirms", async () => {
    await controller.poll();
    await controller.setPriority(2, "low");
    expect(
      effectivePriority(controller.state, 2, "medium"),
    ).toBe("low");
  });

  it("surfaces the server error code on rejection", async () => {
    await controller.poll();
    service.failNext = { code: "schema_violation", message: "bad priority" };
    await controller.setPriority(1, "urgent");
    expect(controller.state.banner).toBe("schema_violation: bad priority");
    expect(renderConsole(controller.state)).toContain("schema_violation");
  });
});

describe("pause round-trip", () => {
  it("issues the POST and utilization decays on the next poll", async () => {
    await controller.poll();
    await controller.pausePlan(1);
    expect(
      service.calls.filter(
        (c) => c.method === "POST" && c.path === "/v1/plans/1/pause",
      ),
    ).toHaveLength(1);
    await controller.poll();
    expect(controller.state.progress!.sites.cern.utilization).toBe(0);
    expect(service.planState).toBe("paused");
  });
});

describe("retry round-trip", () => {
  it("issues the POST and the retry counter moves on the next poll", async () => {
    await controller.poll();
    await controller.retryDerivation(7);
    expect(
      service.calls.filter(
        (c) => c.method === "POST" && c.path === "/v1/derivations/7/retry",
      ),
    ).toHaveLength(1);
    await controller.poll();
    expect(controller.state.progress!.retries).toBe(1);
    expect(renderConsole(controller.state)).toContain(
      '<dd data-role="retries">1</dd>',
    );
  });
});

describe("chi-squared chart", () => {
  const report: ValidationReport = {
    passed: false,
    threshold: 2.0,
    results: [
      { name: "jet_eta", chi2: 18, ndf: 20, chi2_per_ndf: 0.9 },
      { name: "jet_pt", chi2: 250, ndf: 50, chi2_per_ndf: 5.0 },
      { name: "n_jets", chi2: 24, ndf: 10, chi2_per_ndf: 2.4 },
    ],
    // as served by the API: worst first, name as tiebreak
    chart: [
      ["jet_pt", 5.0],
      ["n_jets", 2.4],
      ["jet_eta", 0.9],
    ],
  };

  it("renders rows in exactly the API's summary order", () => {
    expect(chartRows(report)).toEqual(report.chart);
    const html = renderChiSquaredChart(report);
    const order = [...html.matchAll(/data-hist="([^"]+)"/g)].map((m) => m[1]);
    expect(order).toEqual(["jet_pt", "n_jets", "jet_eta"]);
  });

  it("matches the server-side ranking rule", () => {
    // same rule the API applies: descending chi2/ndf, then name
    const ranked = [...report.results]
      .sort((a, b) =>
        b.chi2_per_ndf - a.chi2_per_ndf || a.name.localeCompare(b.name),
      )
      .map((r) => r.name);
    expect(chartRows(report).map(([name]) => name)).toEqual(ranked);
  });

  it("marks rows above threshold and shows the verdict", () => {
    const html = renderChiSquaredChart(report);
    expect(html).toContain('class="chi2-row alarm" data-hist="jet_pt"');
    expect(html).toContain('class="chi2-row alarm" data-hist="n_jets"');
    expect(html).not.toContain('class="chi2-row alarm" data-hist="jet_eta"');
    expect(html).toContain("FAIL");
  });
});
