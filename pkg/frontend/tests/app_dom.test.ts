// @vitest-environment jsdom
// UI wiring against a mocked session API: the app renders server state only,
// and decision widgets call the documented endpoints.
import { beforeEach, describe, expect, it, vi } from "vitest";

import { ReviewApp } from "../src/main";
import type { SessionView } from "../src/types";

const sessionView: SessionView = {
  steps: {
    align: "done",
    subsample: "done",
    thresholds: "pending",
    tiers: "pending",
    grid: "pending",
    extract: "pending",
    surface: "pending",
  },
  scan_id: "SYNS",
  tiers: [
    { index: 1, n_rows: 2, n_cols: 3, occupied: 4 },
    { index: 2, n_rows: 2, n_cols: 3, occupied: 4 },
  ],
  occupied_total: 8,
  slice_count: 420,
};

const histogram = {
  bins: 500,
  edges: Array.from({ length: 501 }, (_, i) => i * 100),
  counts: Array.from({ length: 500 }, (_, i) => (i % 7) + 1),
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

let posted: { url: string; body: unknown }[] = [];

beforeEach(() => {
  posted = [];
  vi.stubGlobal("fetch", vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    if (init?.method === "POST") {
      posted.push({ url, body: JSON.parse(String(init.body)) });
      return jsonResponse({ ok: true, steps: sessionView.steps, report: {
        steps_run: [], timings_s: {}, objects: 0, failures: [],
        peak_tracked_bytes: 0, out_dir: "out",
      } });
    }
    if (url.endsWith("/api/session")) return jsonResponse(sessionView);
    if (url.endsWith("/api/histogram")) return jsonResponse(histogram);
    if (url.endsWith("/api/zprofile")) {
      return jsonResponse({
        profile: Array.from({ length: 42 }, (_, i) => 5000 - 10 * i),
        candidates: [{ position: 21, prominence: 4000, width: 12 }],
        cuts: [21],
        slabs: [{ z_start: 0, z_stop: 21 }, { z_start: 21, z_stop: 42 }],
        ratified: false,
      });
    }
    return jsonResponse({ error: { type: "NotFound", message: url } }, 404);
  }));
});

async function flush(): Promise<void> {
  for (let i = 0; i < 8; i++) await Promise.resolve();
}

describe("ReviewApp", () => {
  it("renders the step ladder from server state only", async () => {
    document.body.innerHTML = '<div id="root"></div>';
    const app = new ReviewApp(document.getElementById("root")!);
    await app.start();
    await flush();
    const ladder = document.querySelector(".ladder")!;
    expect(ladder.textContent).toContain("align: done");
    expect(ladder.textContent).toContain("thresholds: pending");
    expect(ladder.textContent).toContain("scan SYNS");
  });

  it("threshold submit posts the marker values", async () => {
    document.body.innerHTML = '<div id="root"></div>';
    const app = new ReviewApp(document.getElementById("root")!);
    await app.start();
    await flush();
    const inputs = Array.from(
      document.querySelectorAll<HTMLInputElement>(".card input[type=number]"),
    ).filter((i) => i.closest(".card")?.textContent?.includes("Thresholds"));
    expect(inputs.length).toBe(3);
    const [aDiv, bDiv, aObj] = inputs;
    aDiv!.value = "8500";
    aDiv!.dispatchEvent(new Event("change"));
    bDiv!.value = "24000";
    bDiv!.dispatchEvent(new Event("change"));
    aObj!.value = "24000";
    aObj!.dispatchEvent(new Event("change"));
    const submit = Array.from(document.querySelectorAll("button")).find(
      (b) => b.textContent === "Save thresholds",
    )!;
    expect(submit.disabled).toBe(false);
    submit.click();
    await flush();
    const post = posted.find((p) => p.url.endsWith("/api/thresholds"));
    expect(post?.body).toEqual({
      a_divider: 8500,
      b_divider: 24000,
      a_object: 24000,
      b_object: null,
    });
  });

  it("accept-all on tier cuts runs the step instead of overriding", async () => {
    document.body.innerHTML = '<div id="root"></div>';
    const app = new ReviewApp(document.getElementById("root")!);
    await app.start();
    await flush();
    const submit = Array.from(document.querySelectorAll("button")).find(
      (b) => b.textContent === "Ratify tier cuts",
    )!;
    submit.click();
    await flush();
    expect(posted.some((p) => p.url.endsWith("/api/tier_cuts"))).toBe(false);
    const run = posted.find((p) => p.url.endsWith("/api/run"));
    expect(run?.body).toEqual({ through: "tiers" });
  });

  it("edited cuts post an override and warn on count mismatch", async () => {
    document.body.innerHTML = '<div id="root"></div>';
    const app = new ReviewApp(document.getElementById("root")!);
    await app.start();
    await flush();
    const tiersCard = Array.from(document.querySelectorAll(".card")).find(
      (c) => c.textContent?.includes("Tier boundaries"),
    )!;
    const del = Array.from(tiersCard.querySelectorAll("button")).find(
      (b) => b.textContent === "delete",
    )!;
    del.click();
    await flush();
    expect(tiersCard.querySelector(".status.warn")?.textContent).toBe(
      "expected 1 cuts, have 0",
    );
    const submit = Array.from(tiersCard.querySelectorAll("button")).find(
      (b) => b.textContent === "Ratify tier cuts",
    )!;
    expect(submit.disabled).toBe(true); // empty cut list cannot be submitted

    const add = Array.from(tiersCard.querySelectorAll("button")).find(
      (b) => b.textContent === "add cut",
    )!;
    add.click();
    await flush();
    const submit2 = Array.from(tiersCard.querySelectorAll("button")).find(
      (b) => b.textContent === "Ratify tier cuts",
    )!;
    expect(submit2.disabled).toBe(false);
    submit2.click();
    await flush();
    const post = posted.find((p) => p.url.endsWith("/api/tier_cuts"));
    expect(post?.body).toEqual({ cuts: [21] });
  });
});
