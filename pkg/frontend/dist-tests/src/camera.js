import { downscale } from "./ppm.js";
const UPLOAD_MAX_WIDTH = 320;
export class BrowserCamera {
    video;
    canvas;
    stream = null;
    constructor(video) {
        this.video = video;
        this.canvas = document.createElement("canvas");
    }
    async start() {
        this.stream = await navigator.mediaDevices.getUserMedia({ video: true });
        this.video.srcObject = this.stream;
        await this.video.play();
    }
    grab() {
        const w = this.video.videoWidth;
        const h = this.video.videoHeight;
        if (!w || !h)
            return null;
        this.canvas.width = w;
        this.canvas.height = h;
        const ctx = this.canvas.getContext("2d");
        if (!ctx)
            return null;
        ctx.drawImage(this.video, 0, 0);
        const img = ctx.getImageData(0, 0, w, h);
        return downscale({ width: w, height: h, data: img.data }, UPLOAD_MAX_WIDTH);
    }
    stop() {
        for (const track of this.stream?.getTracks() ?? [])
            track.stop();
        this.stream = null;
    }
}
export function nowIso() {
    return new Date().toISOString().replace(/\.\d{3}Z$/, "Z");
}
