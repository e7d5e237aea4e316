// Minimal canvas plotting: a filled histogram, a 1-D profile line, vertical
// marker lines. Drawing is skipped when no 2D context exists (jsdom), so the
// components stay testable without a canvas implementation.

export interface PlotScale {
  width: number;
  height: number;
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
}

export function xToPx(scale: PlotScale, x: number): number {
  return ((x - scale.xMin) / (scale.xMax - scale.xMin || 1)) * scale.width;
}

export function pxToX(scale: PlotScale, px: number): number {
  return scale.xMin + (px / scale.width) * (scale.xMax - scale.xMin);
}

export function yToPx(scale: PlotScale, y: number): number {
  return (
    scale.height -
    ((y - scale.yMin) / (scale.yMax - scale.yMin || 1)) * scale.height
  );
}

export function profileScale(
  values: number[],
  width: number,
  height: number,
): PlotScale {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    lo = Math.min(lo, v);
    hi = Math.max(hi, v);
  }
  if (!isFinite(lo)) {
    lo = 0;
    hi = 1;
  }
  const pad = (hi - lo || 1) * 0.05;
  return {
    width,
    height,
    xMin: 0,
    xMax: Math.max(values.length - 1, 1),
    yMin: lo - pad,
    yMax: hi + pad,
  };
}

function context(canvas: HTMLCanvasElement): CanvasRenderingContext2D | null {
  try {
    return canvas.getContext("2d");
  } catch {
    return null;
  }
}

export function drawHistogram(
  canvas: HTMLCanvasElement,
  edges: number[],
  counts: number[],
): PlotScale {
  const scale: PlotScale = {
    width: canvas.width,
    height: canvas.height,
    xMin: edges[0] ?? 0,
    xMax: edges[edges.length - 1] ?? 1,
    yMin: 0,
    yMax: Math.log10(Math.max(...counts, 1) + 1),
  };
  const ctx = context(canvas);
  if (!ctx) return scale;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#4a7bab";
  for (let i = 0; i < counts.length; i++) {
    const x0 = xToPx(scale, edges[i] ?? 0);
    const x1 = xToPx(scale, edges[i + 1] ?? 0);
    const h = yToPx(scale, Math.log10((counts[i] ?? 0) + 1));
    ctx.fillRect(x0, h, Math.max(x1 - x0, 1), canvas.height - h);
  }
  return scale;
}

export function drawProfile(
  canvas: HTMLCanvasElement,
  values: number[],
  scale?: PlotScale,
): PlotScale {
  const s = scale ?? profileScale(values, canvas.width, canvas.height);
  const ctx = context(canvas);
  if (!ctx) return s;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#333";
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = xToPx(s, i);
    const y = yToPx(s, v);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
  return s;
}

export function drawMarkers(
  canvas: HTMLCanvasElement,
  scale: PlotScale,
  positions: number[],
  color = "#c03a2b",
): void {
  const ctx = context(canvas);
  if (!ctx) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  for (const pos of positions) {
    const x = xToPx(scale, pos);
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, canvas.height);
    ctx.stroke();
  }
}
