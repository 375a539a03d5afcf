import { ApiClient } from "./api.js";
import type { FrameSource } from "./camera.js";
import { encodePpm } from "./ppm.js";
import { EventSourceFactory, RecognitionStream } from "./stream.js";
import type { AttendanceRecord, RecognitionEvent, Session } from "./types.js";

export interface DashboardCallbacks {
  onOverlay(events: RecognitionEvent[]): void;
  onTable(rows: AttendanceRecord[]): void;
  onEnded(csvUrl: string): void;
  onError(code: string, message: string): void;
}

export type DashboardState = "idle" | "running" | "ended";

// Live attendance view: streams camera frames to the session, renders the
// recognition events pushed back on the event stream, and mirrors the
// attendance table from the records endpoint. Counts are never computed
// client-side; every table refresh re-reads the service, so a stream
// reconnect can never duplicate rows.
export class SessionDashboard {
  state: DashboardState = "idle";
  session: Session | null = null;
  events: RecognitionEvent[] = []; // ordered by arrival (timestamps ascend)

  private stream: RecognitionStream | null = null;
  private inflight = false;
  private refreshing = false;
  private refreshAgain = false;

  constructor(
    private api: ApiClient,
    private camera: FrameSource,
    private callbacks: DashboardCallbacks,
    private clock: () => string,
  ) {}

  async begin(name: string, debounceS: number | null, streams: EventSourceFactory): Promise<boolean> {
    const status = await this.api.status();
    if (!status.models_ready) {
      this.callbacks.onError("MODELS_NOT_READY", "train models before running a session");
      return false;
    }
    try {
      await this.camera.start();
    } catch {
      this.callbacks.onError("CAMERA_DENIED", "camera permission was not granted");
      return false;
    }
    // anchor the session to this console's clock: frame timestamps come
    // from the same clock, so monotonicity can never trip on clock skew
    this.session = await this.api.startSession(name, debounceS, this.clock());
    this.state = "running";
    this.stream = new RecognitionStream(this.api.eventStreamUrl(this.session.session_id), streams, {
      onEvent: (ev) => this.handleEvent(ev),
      onEnd: () => undefined,
      onConnect: () => void this.refreshTable(),
    });
    this.stream.connect();
    return true;
  }

  private handleEvent(ev: RecognitionEvent): void {
    this.events.push(ev);
    // overlay shows all boxes of the most recent frame (same timestamp)
    const latest = this.events.filter((e) => e.timestamp === ev.timestamp);
    this.callbacks.onOverlay(latest);
    if (ev.marked) void this.refreshTable();
  }

  private async refreshTable(): Promise<void> {
    if (!this.session) return;
    if (this.refreshing) {
      // coalesce: remember that state moved under the in-flight refresh
      this.refreshAgain = true;
      return;
    }
    this.refreshing = true;
    try {
      do {
        this.refreshAgain = false;
        const { records } = await this.api.sessionRecords(this.session.session_id);
        this.callbacks.onTable(records);
      } while (this.refreshAgain);
    } finally {
      this.refreshing = false;
    }
  }

  async tick(): Promise<void> {
    if (this.state !== "running" || this.inflight || !this.session) return;
    const frame = this.camera.grab();
    if (!frame) return;
    this.inflight = true;
    try {
      await this.api.pushFrame(this.session.session_id, encodePpm(frame), this.clock());
    } catch {
      // session may have ended under us; stop() handles the state change
    } finally {
      this.inflight = false;
    }
  }

  async stop(): Promise<void> {
    if (this.state !== "running" || !this.session) return;
    this.state = "ended"; // stops tick() before the await below
    this.camera.stop();
    await this.api.endSession(this.session.session_id);
    this.stream?.close();
    await this.refreshTable();
    this.callbacks.onEnded(this.api.exportCsvUrl(this.session.session_id));
  }
}
