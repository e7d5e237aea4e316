// Threshold picking: three draggable markers on the 500-bin histogram.
// The markers must keep a_divider < b_divider <= a_object; dragging clamps
// against the neighbors so an invalid set is unreachable from the UI (the
// server revalidates anyway).

import type { HistogramView, ThresholdDecision } from "./types";

export type MarkerName = "a_divider" | "b_divider" | "a_object";

export interface Markers {
  a_divider: number;
  b_divider: number;
  a_object: number;
}

const MIN_GAP = 1e-6;

export function clampMarker(
  markers: Markers,
  which: MarkerName,
  value: number,
  range: [number, number],
): Markers {
  const [lo, hi] = range;
  const next = { ...markers };
  if (which === "a_divider") {
    next.a_divider = Math.min(
      Math.max(value, lo),
      markers.b_divider - MIN_GAP,
    );
  } else if (which === "b_divider") {
    next.b_divider = Math.min(
      Math.max(value, markers.a_divider + MIN_GAP),
      markers.a_object,
    );
  } else {
    next.a_object = Math.min(Math.max(value, markers.b_divider), hi);
  }
  return next;
}

export function markersValid(markers: Markers): boolean {
  return (
    markers.a_divider < markers.b_divider &&
    markers.b_divider <= markers.a_object
  );
}

export function defaultMarkers(hist: HistogramView): Markers {
  const lo = hist.edges[0] ?? 0;
  const hi = hist.edges[hist.edges.length - 1] ?? 1;
  const span = hi - lo;
  return {
    a_divider: lo + 0.25 * span,
    b_divider: lo + 0.5 * span,
    a_object: lo + 0.5 * span,
  };
}

export function toDecision(markers: Markers): ThresholdDecision {
  return {
    a_divider: markers.a_divider,
    b_divider: markers.b_divider,
    a_object: markers.a_object,
    b_object: null,
  };
}

/** Value (voxel units) <-> pixel x on a plot of the histogram's value span. */
export function valueToX(
  value: number,
  edges: number[],
  width: number,
): number {
  const lo = edges[0] ?? 0;
  const hi = edges[edges.length - 1] ?? 1;
  return ((value - lo) / (hi - lo || 1)) * width;
}

export function xToValue(x: number, edges: number[], width: number): number {
  const lo = edges[0] ?? 0;
  const hi = edges[edges.length - 1] ?? 1;
  return lo + (Math.min(Math.max(x, 0), width) / width) * (hi - lo);
}
