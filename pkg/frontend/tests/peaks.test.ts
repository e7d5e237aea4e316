// @vitest-environment node
import { describe, expect, it } from "vitest";

import {
  addCut,
  canSubmit,
  countWarning,
  duplicatesWarning,
  fromDetection,
  moveCut,
  removeCut,
} from "../src/peaks";

describe("cut editing", () => {
  it("starts untouched from the detection", () => {
    const s = fromDetection([52, 27], 2);
    expect(s.cuts).toEqual([27, 52]);
    expect(s.touched).toBe(false);
    expect(countWarning(s)).toBeNull();
    expect(canSubmit(s)).toBe(true);
  });

  it("moving a cut re-sorts and marks touched", () => {
    const s = moveCut(fromDetection([27, 52], 2), 0, 60);
    expect(s.cuts).toEqual([52, 60]);
    expect(s.touched).toBe(true);
  });

  it("deleting a required cut warns with the expected count", () => {
    const s = removeCut(fromDetection([20, 40, 60], 3), 1);
    expect(countWarning(s)).toBe("expected 3 cuts, have 2");
    expect(canSubmit(s)).toBe(true); // allowed, but needs explicit confirm
  });

  it("adding brings the count back", () => {
    let s = removeCut(fromDetection([20, 40, 60], 3), 1);
    s = addCut(s, 41);
    expect(countWarning(s)).toBeNull();
    expect(s.cuts).toEqual([20, 41, 60]);
  });

  it("duplicates block submission", () => {
    const s = addCut(fromDetection([20, 40], 2), 40);
    expect(duplicatesWarning(s)).toContain("duplicate");
    expect(canSubmit(s)).toBe(false);
  });

  it("out-of-range edits are ignored", () => {
    const s = fromDetection([10], 1);
    expect(moveCut(s, 5, 99)).toBe(s);
    expect(removeCut(s, -1)).toBe(s);
  });
});
