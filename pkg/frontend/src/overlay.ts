import type { RecognitionEvent } from "./types.js";

// Boxes are in uploaded-frame coordinates; scale into the on-screen video size.
export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  events: RecognitionEvent[],
  frameW: number,
  frameH: number,
): void {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  const sx = ctx.canvas.width / frameW;
  const sy = ctx.canvas.height / frameH;
  ctx.lineWidth = 2;
  ctx.font = "14px sans-serif";
  for (const ev of events) {
    const known = ev.person_id !== "UNKNOWN";
    const x = ev.box.x * sx;
    const y = ev.box.y * sy;
    const w = ev.box.w * sx;
    const h = ev.box.h * sy;
    ctx.strokeStyle = known ? "#2ecc71" : "#e67e22";
    ctx.strokeRect(x, y, w, h);
    const label = `${ev.person_id} ${(ev.top_prob * 100).toFixed(0)}%`;
    const tw = ctx.measureText(label).width + 8;
    ctx.fillStyle = "rgba(0,0,0,0.6)";
    ctx.fillRect(x, y - 18, tw, 18);
    ctx.fillStyle = "#fff";
    ctx.fillText(label, x + 4, y - 5);
  }
}
