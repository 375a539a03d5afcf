import { ApiClient, ApiError } from "./api.js";
import type { FrameSource } from "./camera.js";
import { encodePpm } from "./ppm.js";
import type { PersonRecord } from "./types.js";

export interface WizardCallbacks {
  onProgress(count: number, target: number): void;
  onFrameRejected(code: string): void;
  onDone(record: PersonRecord): void;
  onFatal(code: string, message: string): void;
}

export type WizardState = "idle" | "capturing" | "done" | "failed";

// Drives enrollment: register, capture frames until the sample target is
// reached, then finalize. One upload in flight at a time; frames grabbed
// while an upload is pending are dropped, not queued. No frame leaves
// this class after completion or failure.
export class EnrollmentWizard {
  state: WizardState = "idle";
  progress = 0;

  private inflight = false;
  private personId = "";

  constructor(
    private api: ApiClient,
    private camera: FrameSource,
    private target: number,
    private callbacks: WizardCallbacks,
  ) {}

  async begin(id: string, name: string): Promise<boolean> {
    try {
      await this.api.registerPerson(id, name);
    } catch (err) {
      if (err instanceof ApiError) {
        this.state = "failed";
        this.callbacks.onFatal(err.code, err.message);
        return false;
      }
      throw err;
    }
    try {
      await this.camera.start();
    } catch {
      this.state = "failed";
      this.callbacks.onFatal("CAMERA_DENIED", "camera permission was not granted");
      return false;
    }
    this.personId = id;
    this.state = "capturing";
    this.callbacks.onProgress(0, this.target);
    return true;
  }

  async tick(): Promise<void> {
    if (this.state !== "capturing" || this.inflight) return;
    const frame = this.camera.grab();
    if (!frame) return;
    this.inflight = true;
    try {
      const { sample_count } = await this.api.uploadSample(this.personId, encodePpm(frame));
      this.progress = sample_count;
      this.callbacks.onProgress(this.progress, this.target);
      if (this.progress >= this.target) {
        await this.finish();
      }
    } catch (err) {
      if (err instanceof ApiError && (err.code === "NO_FACE" || err.code === "MULTIPLE_FACES")) {
        this.callbacks.onFrameRejected(err.code);
      } else if (err instanceof ApiError) {
        this.state = "failed";
        this.camera.stop();
        this.callbacks.onFatal(err.code, err.message);
      } else {
        throw err;
      }
    } finally {
      this.inflight = false;
    }
  }

  private async finish(): Promise<void> {
    this.state = "done"; // set before awaiting so no further frame is sent
    this.camera.stop();
    const record = await this.api.finalizePerson(this.personId, this.target);
    this.callbacks.onDone(record);
  }

  abort(): void {
    if (this.state === "capturing") {
      this.state = "failed";
      this.camera.stop();
    }
  }
}
