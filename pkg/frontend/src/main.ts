// Review UI entry point: one panel per human decision point, a step ladder
// showing pipeline state, and a run button. All state shown is the server's;
// after every POST the affected panels re-fetch.

import { SessionClient } from "./api";
import { buildAlignView } from "./align";
import {
  drawHistogram,
  drawMarkers,
  drawProfile,
  profileScale,
  pxToX,
  xToPx,
} from "./charts";
import {
  addCut,
  canSubmit,
  countWarning,
  duplicatesWarning,
  fromDetection,
  moveCut,
  removeCut,
  type CutState,
} from "./peaks";
import {
  clampMarker,
  defaultMarkers,
  markersValid,
  toDecision,
  valueToX,
  xToValue,
  type MarkerName,
  type Markers,
} from "./thresholds";
import type { GridView, SessionView, StepName, ZProfileView } from "./types";

const STEP_ORDER: StepName[] = [
  "align", "subsample", "thresholds", "tiers", "grid", "extract", "surface",
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class ReviewApp {
  readonly client: SessionClient;
  readonly root: HTMLElement;
  private session: SessionView | null = null;
  private ladder = el("nav", "ladder");
  private panels = el("main", "panels");
  private statusLine = el("p", "status");

  constructor(root: HTMLElement, base = "") {
    this.client = new SessionClient(base);
    this.root = root;
    root.append(this.ladder, this.panels, this.statusLine);
  }

  async start(): Promise<void> {
    this.session = await this.client.session();
    this.renderLadder();
    await this.renderPanels();
  }

  private say(text: string): void {
    this.statusLine.textContent = text;
  }

  private renderLadder(): void {
    this.ladder.replaceChildren();
    if (!this.session) return;
    this.ladder.append(el("strong", "", `scan ${this.session.scan_id}`));
    for (const step of STEP_ORDER) {
      const status = this.session.steps[step];
      this.ladder.append(el("span", `step ${status}`, `${step}: ${status}`));
    }
  }

  private async refreshSession(): Promise<void> {
    this.session = await this.client.session();
    this.renderLadder();
  }

  private async renderPanels(): Promise<void> {
    this.panels.replaceChildren();
    if (!this.session) return;
    this.panels.append(await this.alignPanel());
    if (this.session.steps.subsample === "done") {
      this.panels.append(await this.thresholdPanel());
      this.panels.append(await this.tiersPanel());
      if (this.session.steps.tiers === "done"
          && this.session.steps.thresholds === "done") {
        this.panels.append(await this.gridPanel());
      }
    }
    this.panels.append(this.runPanel());
  }

  private async alignPanel(): Promise<HTMLElement> {
    const session = this.session!;
    const initial = {
      angle_deg: 0,
      row_range: [0, 4096] as [number, number],
      col_range: [0, 4096] as [number, number],
    };
    const view = buildAlignView(
      this.client, session, [4096, 4096], initial, () => this.afterDecision(),
    );
    const wrap = el("section", "card");
    wrap.append(el("h2", "", "1 · Alignment"), view.element);
    view.refreshPreview();
    return wrap;
  }

  private async thresholdPanel(): Promise<HTMLElement> {
    const wrap = el("section", "card");
    wrap.append(el("h2", "", "2 · Thresholds"));
    const hist = await this.client.histogram();
    const canvas = el("canvas", "plot") as HTMLCanvasElement;
    canvas.width = 900;
    canvas.height = 220;
    let markers: Markers = defaultMarkers(hist);
    const valueSpan: [number, number] = [
      hist.edges[0] ?? 0,
      hist.edges[hist.edges.length - 1] ?? 1,
    ];

    const submit = el("button", "", "Save thresholds");
    const info = el("p", "status");
    const fields = el("div", "controls");
    const fieldInputs = {} as Record<MarkerName, HTMLInputElement>;
    for (const name of ["a_divider", "b_divider", "a_object"] as MarkerName[]) {
      const label = el("label", "slider");
      label.append(el("span", "", name));
      const input = el("input") as HTMLInputElement;
      input.type = "number";
      input.addEventListener("change", () => {
        markers = clampMarker(markers, name, Number(input.value), valueSpan);
        redraw();
      });
      fieldInputs[name] = input;
      label.append(input);
      fields.append(label);
    }

    const redraw = () => {
      const scale = drawHistogram(canvas, hist.edges, hist.counts);
      drawMarkers(canvas, scale, [markers.a_divider], "#2b7a3f");
      drawMarkers(canvas, scale, [markers.b_divider], "#c08a2b");
      drawMarkers(canvas, scale, [markers.a_object], "#c03a2b");
      submit.disabled = !markersValid(markers);
      for (const name of Object.keys(fieldInputs) as MarkerName[]) {
        fieldInputs[name].value = String(markers[name]);
      }
      info.textContent =
        `a_divider=${markers.a_divider.toFixed(0)} ` +
        `b_divider=${markers.b_divider.toFixed(0)} ` +
        `a_object=${markers.a_object.toFixed(0)}`;
    };

    let dragging: MarkerName | null = null;
    canvas.addEventListener("pointerdown", (ev) => {
      const x = ev.offsetX;
      const candidates: [MarkerName, number][] = [
        ["a_divider", valueToX(markers.a_divider, hist.edges, canvas.width)],
        ["b_divider", valueToX(markers.b_divider, hist.edges, canvas.width)],
        ["a_object", valueToX(markers.a_object, hist.edges, canvas.width)],
      ];
      candidates.sort((a, b) => Math.abs(a[1] - x) - Math.abs(b[1] - x));
      dragging = candidates[0]?.[0] ?? null;
      canvas.setPointerCapture(ev.pointerId);
    });
    canvas.addEventListener("pointermove", (ev) => {
      if (!dragging) return;
      const value = xToValue(ev.offsetX, hist.edges, canvas.width);
      markers = clampMarker(markers, dragging, value, valueSpan);
      redraw();
    });
    canvas.addEventListener("pointerup", () => {
      dragging = null;
    });

    submit.addEventListener("click", async () => {
      try {
        await this.client.postThresholds(toDecision(markers));
        this.say("thresholds saved");
        await this.afterDecision();
      } catch (err) {
        info.textContent = String(err);
      }
    });

    wrap.append(canvas, fields, info, submit);
    redraw();
    return wrap;
  }

  private async tiersPanel(): Promise<HTMLElement> {
    const wrap = el("section", "card");
    wrap.append(el("h2", "", "3 · Tier boundaries"));
    let view: ZProfileView;
    try {
      view = await this.client.zProfile();
    } catch (err) {
      wrap.append(el("p", "status error", String(err)));
      return wrap;
    }
    const negated = view.profile.map((v) => -v);
    const canvas = el("canvas", "plot") as HTMLCanvasElement;
    canvas.width = 900;
    canvas.height = 200;

    const expected = (this.session?.tiers.length ?? 1) - 1;
    let cuts: CutState = fromDetection(view.cuts ?? [], expected);

    const list = el("div", "cut-list");
    const warning = el("p", "status warn");
    const submit = el("button", "", "Ratify tier cuts");
    const confirmNote = el("label", "confirm-note");
    const confirmBox = el("input") as HTMLInputElement;
    confirmBox.type = "checkbox";
    confirmNote.append(confirmBox, el("span", "", " accept mismatched count"));

    const redraw = () => {
      const scale = drawProfile(canvas, negated,
        profileScale(negated, canvas.width, canvas.height));
      drawMarkers(canvas, scale,
        (view.candidates ?? []).map((c) => c.position), "#9ab");
      drawMarkers(canvas, scale, cuts.cuts, "#c03a2b");
      list.replaceChildren();
      cuts.cuts.forEach((cut, i) => {
        const row = el("div", "cut-row");
        const input = el("input") as HTMLInputElement;
        input.type = "number";
        input.value = String(cut);
        input.addEventListener("change", () => {
          cuts = moveCut(cuts, i, Number(input.value));
          redraw();
        });
        const del = el("button", "small", "delete");
        del.addEventListener("click", () => {
          cuts = removeCut(cuts, i);
          redraw();
        });
        row.append(el("span", "", `cut ${i + 1}`), input, del);
        list.append(row);
      });
      const add = el("button", "small", "add cut");
      add.addEventListener("click", () => {
        cuts = addCut(cuts, Math.round(negated.length / 2));
        redraw();
      });
      list.append(add);
      const mismatch = countWarning(cuts);
      const dup = duplicatesWarning(cuts);
      warning.textContent = dup ?? mismatch ?? (view.ratified ? "ratified" : "");
      submit.disabled =
        !canSubmit(cuts) || (mismatch !== null && !confirmBox.checked);
      confirmNote.style.display = mismatch ? "" : "none";
    };
    confirmBox.addEventListener("change", redraw);

    submit.addEventListener("click", async () => {
      try {
        if (cuts.touched) {
          await this.client.postTierCuts(cuts.cuts);
          this.say("tier cuts ratified");
        } else {
          // accepting the detection as-is: same code path as headless, so
          // downstream output stays byte-identical to a config-driven run
          await this.client.runThrough("tiers");
          this.say("detected tier cuts accepted");
        }
        await this.afterDecision();
      } catch (err) {
        warning.textContent = String(err);
      }
    });

    wrap.append(canvas, list, warning, confirmNote, submit);
    redraw();
    return wrap;
  }

  private async gridPanel(): Promise<HTMLElement> {
    const wrap = el("section", "card");
    wrap.append(el("h2", "", "4 · Grid cuts per tier"));
    for (const tier of this.session?.tiers ?? []) {
      let grid: GridView;
      try {
        grid = await this.client.grid(tier.index);
      } catch (err) {
        wrap.append(el("p", "status error", `tier ${tier.index}: ${String(err)}`));
        continue;
      }
      const section = el("div", "tier-grid");
      section.append(el("h3", "",
        `tier ${tier.index}, rotation ${grid.rotation_deg.toFixed(2)}°` +
        (grid.ratified ? " (ratified)" : "")));
      const mask = el("img", "divider-mask") as HTMLImageElement;
      mask.src = this.client.dividerMaskUrl(tier.index);
      section.append(mask);

      for (const axis of ["rows", "cols"] as const) {
        const canvas = el("canvas", "plot") as HTMLCanvasElement;
        canvas.width = 450;
        canvas.height = 120;
        const values = grid.projections[axis];
        const scale = drawProfile(canvas, values,
          profileScale(values, canvas.width, canvas.height));
        const cutKey = axis === "rows" ? "row_cuts" : "col_cuts";
        drawMarkers(canvas, scale, grid[cutKey] ?? [], "#c03a2b");
        section.append(canvas);
      }
      const note = el("p", "status",
        grid.error ? `${grid.error.type}: ${grid.error.message}` :
        `row cuts: ${(grid.row_cuts ?? []).join(", ")} | ` +
        `col cuts: ${(grid.col_cuts ?? []).join(", ")}`);
      section.append(note);
      wrap.append(section);
    }
    const accept = el("button", "", "Looks right, continue");
    accept.addEventListener("click", () => void this.runStep("grid"));
    wrap.append(accept);
    return wrap;
  }

  private runPanel(): HTMLElement {
    const wrap = el("section", "card");
    wrap.append(el("h2", "", "5 · Run"));
    for (const step of ["tiers", "grid", "extract", "surface"] as StepName[]) {
      const btn = el("button", "", `run through ${step}`);
      btn.addEventListener("click", () => void this.runStep(step));
      wrap.append(btn);
    }
    return wrap;
  }

  private async runStep(step: StepName): Promise<void> {
    this.say(`running through ${step}...`);
    try {
      const result = await this.client.runThrough(step);
      const failures = result.report.failures.length;
      this.say(
        `done: ${result.report.objects} objects` +
        (failures ? `, ${failures} failures` : ""),
      );
      await this.afterDecision();
    } catch (err) {
      this.say(String(err));
    }
  }

  private async afterDecision(): Promise<void> {
    try {
      await this.refreshSession();
      await this.renderPanels();
    } catch (err) {
      this.say(`refresh failed: ${String(err)}`);
    }
  }
}

export function mount(root: HTMLElement, base = ""): ReviewApp {
  const app = new ReviewApp(root, base);
  void app.start();
  return app;
}

declare global {
  interface Window {
    packscanApp?: ReviewApp;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.packscanApp = mount(document.getElementById("app")!);
}
