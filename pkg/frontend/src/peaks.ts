// Ratification of detected cut points: the user accepts the detection as-is,
// or moves, adds and deletes cuts. Pure list operations here; the DOM layer
// just renders the current list and the warning line.

export interface CutState {
  cuts: number[];
  expected: number;
  touched: boolean;
}

export function fromDetection(detected: number[], expected: number): CutState {
  return { cuts: [...detected].sort((a, b) => a - b), expected, touched: false };
}

export function moveCut(state: CutState, index: number, value: number): CutState {
  const cuts = [...state.cuts];
  if (index < 0 || index >= cuts.length) return state;
  cuts[index] = value;
  cuts.sort((a, b) => a - b);
  return { ...state, cuts, touched: true };
}

export function addCut(state: CutState, value: number): CutState {
  const cuts = [...state.cuts, value].sort((a, b) => a - b);
  return { ...state, cuts, touched: true };
}

export function removeCut(state: CutState, index: number): CutState {
  if (index < 0 || index >= state.cuts.length) return state;
  const cuts = state.cuts.filter((_, i) => i !== index);
  return { ...state, cuts, touched: true };
}

/** Non-empty when the cut count disagrees with the layout's expectation. */
export function countWarning(state: CutState): string | null {
  if (state.cuts.length === state.expected) return null;
  return `expected ${state.expected} cuts, have ${state.cuts.length}`;
}

export function duplicatesWarning(state: CutState): string | null {
  for (let i = 1; i < state.cuts.length; i++) {
    if (state.cuts[i] === state.cuts[i - 1]) {
      return `duplicate cut at ${state.cuts[i]}`;
    }
  }
  return null;
}

export function canSubmit(state: CutState): boolean {
  return duplicatesWarning(state) === null && state.cuts.length > 0;
}
