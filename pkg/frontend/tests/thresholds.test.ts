// @vitest-environment node
import { describe, expect, it } from "vitest";

import {
  clampMarker,
  defaultMarkers,
  markersValid,
  toDecision,
  valueToX,
  xToValue,
  type Markers,
} from "../src/thresholds";

const span: [number, number] = [0, 1000];
const base: Markers = { a_divider: 200, b_divider: 500, a_object: 700 };

describe("marker constraints", () => {
  it("keeps ordering when dragging a_divider past b_divider", () => {
    const m = clampMarker(base, "a_divider", 900, span);
    expect(m.a_divider).toBeLessThan(m.b_divider);
    expect(markersValid(m)).toBe(true);
  });

  it("clamps b_divider between its neighbors", () => {
    expect(clampMarker(base, "b_divider", 100, span).b_divider).toBeGreaterThan(200);
    expect(clampMarker(base, "b_divider", 950, span).b_divider).toBe(700);
  });

  it("allows b_divider == a_object", () => {
    const m = clampMarker(base, "a_object", 500, span);
    expect(m.a_object).toBe(500);
    expect(markersValid(m)).toBe(true);
  });

  it("order violations are unreachable by construction", () => {
    let m = base;
    for (const [which, v] of [
      ["a_object", -50],
      ["a_divider", 2000],
      ["b_divider", -10],
    ] as const) {
      m = clampMarker(m, which, v, span);
      expect(markersValid(m)).toBe(true);
    }
  });

  it("respects the histogram value span", () => {
    expect(clampMarker(base, "a_divider", -100, span).a_divider).toBe(0);
    expect(clampMarker(base, "a_object", 5000, span).a_object).toBe(1000);
  });
});

describe("decision payload", () => {
  it("serializes with an unbounded object range", () => {
    expect(toDecision(base)).toEqual({
      a_divider: 200,
      b_divider: 500,
      a_object: 700,
      b_object: null,
    });
  });

  it("defaults sit inside the histogram span and are valid", () => {
    const hist = { bins: 4, edges: [10, 20, 30, 40, 50], counts: [1, 2, 3, 4] };
    const m = defaultMarkers(hist);
    expect(markersValid(m)).toBe(true);
    expect(m.a_divider).toBeGreaterThan(10);
    expect(m.a_object).toBeLessThan(50);
  });
});

describe("pixel mapping", () => {
  const edges = [100, 200, 300];

  it("round-trips values through pixels", () => {
    for (const v of [100, 150, 299.5]) {
      expect(xToValue(valueToX(v, edges, 800), edges, 800)).toBeCloseTo(v, 6);
    }
  });

  it("clamps pixels outside the canvas", () => {
    expect(xToValue(-50, edges, 800)).toBe(100);
    expect(xToValue(9000, edges, 800)).toBe(300);
  });
});
