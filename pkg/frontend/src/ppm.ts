import type { RawFrame } from "./types.js";

// The service accepts binary PNM; P6 (color, maxval 255) is what the
// console uploads. Alpha is dropped.
export function encodePpm(frame: RawFrame): Uint8Array {
  const header = `P6\n${frame.width} ${frame.height}\n255\n`;
  const head = new TextEncoder().encode(header);
  const out = new Uint8Array(head.length + frame.width * frame.height * 3);
  out.set(head, 0);
  let o = head.length;
  const px = frame.data;
  for (let i = 0; i < frame.width * frame.height; i++) {
    out[o++] = px[i * 4];
    out[o++] = px[i * 4 + 1];
    out[o++] = px[i * 4 + 2];
  }
  return out;
}

// Nearest-neighbor downscale keeps uploads small; the service does its own
// resampling anyway.
export function downscale(frame: RawFrame, maxWidth: number): RawFrame {
  if (frame.width <= maxWidth) return frame;
  const scale = maxWidth / frame.width;
  const w = maxWidth;
  const h = Math.max(1, Math.round(frame.height * scale));
  const data = new Uint8ClampedArray(w * h * 4);
  for (let y = 0; y < h; y++) {
    const sy = Math.min(frame.height - 1, Math.floor(y / scale));
    for (let x = 0; x < w; x++) {
      const sx = Math.min(frame.width - 1, Math.floor(x / scale));
      const src = (sy * frame.width + sx) * 4;
      const dst = (y * w + x) * 4;
      data[dst] = frame.data[src];
      data[dst + 1] = frame.data[src + 1];
      data[dst + 2] = frame.data[src + 2];
      data[dst + 3] = 255;
    }
  }
  return { width: w, height: h, data };
}
