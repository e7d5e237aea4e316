// Alignment by trial and error: a chosen slice rendered with the candidate
// rotation/crop applied server-side, sliders for the five values, explicit
// submit. Preview requests are read-only; only the submit POSTs.

import type { SessionClient } from "./api";
import type { AlignmentDecision, SessionView } from "./types";

export interface AlignView {
  element: HTMLElement;
  current(): AlignmentDecision;
  setDecision(d: AlignmentDecision): void;
  refreshPreview(): void;
}

function slider(
  label: string,
  min: number,
  max: number,
  step: number,
  value: number,
  onInput: (v: number) => void,
): { wrap: HTMLElement; input: HTMLInputElement; number: HTMLInputElement } {
  const wrap = document.createElement("label");
  wrap.className = "slider";
  const span = document.createElement("span");
  span.textContent = label;
  const input = document.createElement("input");
  input.type = "range";
  input.min = String(min);
  input.max = String(max);
  input.step = String(step);
  input.value = String(value);
  const number = document.createElement("input");
  number.type = "number";
  number.step = String(step);
  number.value = String(value);
  const emit = (v: string) => {
    input.value = v;
    number.value = v;
    onInput(Number(v));
  };
  input.addEventListener("input", () => emit(input.value));
  number.addEventListener("change", () => emit(number.value));
  wrap.append(span, input, number);
  return { wrap, input, number };
}

export function buildAlignView(
  client: SessionClient,
  session: SessionView,
  sliceShape: [number, number],
  initial: AlignmentDecision,
  onSubmitted: () => void,
): AlignView {
  const [height, width] = sliceShape;
  const root = document.createElement("section");
  root.className = "panel align-panel";

  const img = document.createElement("img");
  img.className = "slice-preview";
  img.alt = "slice preview";

  let decision: AlignmentDecision = structuredClone(initial);
  let sliceK = Math.max(1, Math.round(session.slice_count / 2));

  let timer: ReturnType<typeof setTimeout> | undefined;
  const schedulePreview = () => {
    clearTimeout(timer);
    timer = setTimeout(refreshPreview, 150);
  };

  function refreshPreview(): void {
    img.src = client.sliceUrl(sliceK, 768, decision);
  }

  const controls = document.createElement("div");
  controls.className = "controls";
  const sliders = {
    k: slider("slice", 1, session.slice_count, 1, sliceK, (v) => {
      sliceK = Math.round(v);
      schedulePreview();
    }),
    angle: slider("angle °", -45, 45, 0.1, decision.angle_deg, (v) => {
      decision.angle_deg = v;
      schedulePreview();
    }),
    r0: slider("row start", 0, height, 1, decision.row_range[0], (v) => {
      decision.row_range[0] = Math.round(v);
      schedulePreview();
    }),
    r1: slider("row stop", 0, height, 1, decision.row_range[1], (v) => {
      decision.row_range[1] = Math.round(v);
      schedulePreview();
    }),
    c0: slider("col start", 0, width, 1, decision.col_range[0], (v) => {
      decision.col_range[0] = Math.round(v);
      schedulePreview();
    }),
    c1: slider("col stop", 0, width, 1, decision.col_range[1], (v) => {
      decision.col_range[1] = Math.round(v);
      schedulePreview();
    }),
  };
  for (const s of Object.values(sliders)) controls.append(s.wrap);

  const status = document.createElement("p");
  status.className = "status";

  const submit = document.createElement("button");
  submit.textContent = "Save alignment";
  submit.addEventListener("click", async () => {
    try {
      await client.postAlign(decision);
      status.textContent = "alignment saved";
      onSubmitted();
    } catch (err) {
      status.textContent = String(err);
    }
  });

  root.append(img, controls, submit, status);

  function setDecision(d: AlignmentDecision): void {
    decision = structuredClone(d);
    sliders.angle.input.value = sliders.angle.number.value = String(d.angle_deg);
    sliders.r0.input.value = sliders.r0.number.value = String(d.row_range[0]);
    sliders.r1.input.value = sliders.r1.number.value = String(d.row_range[1]);
    sliders.c0.input.value = sliders.c0.number.value = String(d.col_range[0]);
    sliders.c1.input.value = sliders.c1.number.value = String(d.col_range[1]);
    refreshPreview();
  }

  return {
    element: root,
    current: () => structuredClone(decision),
    setDecision,
    refreshPreview,
  };
}
