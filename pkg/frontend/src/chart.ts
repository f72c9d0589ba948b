/** Minimal canvas line charts for the rolling telemetry series. */
import type { RingBuffer, SeriesPoint } from "./state.js";

export interface SeriesSpec {
  label: string;
  color: string;
  series: RingBuffer<SeriesPoint>;
}

export function drawChart(
  canvas: HTMLCanvasElement,
  specs: SeriesSpec[],
  unit: string,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);

  const points = specs.flatMap((s) => s.series.toArray() as SeriesPoint[]);
  if (points.length < 2) {
    ctx.fillStyle = "#888";
    ctx.fillText("waiting for data…", 10, h / 2);
    return;
  }
  const ts = points.map((p) => p.ts);
  const vals = points.map((p) => p.value);
  const t0 = Math.min(...ts);
  const t1 = Math.max(...ts);
  let v0 = Math.min(...vals);
  let v1 = Math.max(...vals);
  if (v1 - v0 < 1e-9) {
    v0 -= 1;
    v1 += 1;
  }
  const pad = 0.05 * (v1 - v0);
  v0 -= pad;
  v1 += pad;

  const x = (t: number) => ((t - t0) / Math.max(t1 - t0, 1)) * (w - 50) + 45;
  const y = (v: number) => h - 18 - ((v - v0) / (v1 - v0)) * (h - 28);

  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.moveTo(45, 5);
  ctx.lineTo(45, h - 18);
  ctx.lineTo(w - 5, h - 18);
  ctx.stroke();
  ctx.fillStyle = "#666";
  ctx.fillText(`${v1.toFixed(0)} ${unit}`, 2, 12);
  ctx.fillText(`${v0.toFixed(0)}`, 2, h - 20);

  for (const spec of specs) {
    const pts = spec.series.toArray();
    if (pts.length < 2) continue;
    ctx.strokeStyle = spec.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    pts.forEach((p, i) => {
      if (i === 0) ctx.moveTo(x(p.ts), y(p.value));
      else ctx.lineTo(x(p.ts), y(p.value));
    });
    ctx.stroke();
  }
}
