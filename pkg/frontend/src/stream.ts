import type { RecognitionEvent } from "./types.js";

// Minimal slice of the EventSource surface, injectable for tests and
// replaceable if the transport ever changes.
export interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  addEventListener(type: string, listener: () => void): void;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface StreamCallbacks {
  onEvent(ev: RecognitionEvent): void;
  onEnd(): void;
  // fires after every (re)connection; the dashboard resyncs its table here
  onConnect(): void;
}

// Server-sent recognition events with automatic reconnect. Reconnection
// never duplicates table rows because consumers resync keyed state from
// the records endpoint in onConnect instead of accumulating rows blindly.
export class RecognitionStream {
  private source: EventSourceLike | null = null;
  private closed = false;
  private retryMs: number;

  constructor(
    private url: string,
    private factory: EventSourceFactory,
    private callbacks: StreamCallbacks,
    private scheduleReconnect: (fn: () => void, ms: number) => void = (fn, ms) => {
      setTimeout(fn, ms);
    },
    retryMs = 1000,
  ) {
    this.retryMs = retryMs;
  }

  connect(): void {
    if (this.closed) return;
    const source = this.factory(this.url);
    this.source = source;
    this.callbacks.onConnect();
    source.onmessage = (ev) => {
      this.callbacks.onEvent(JSON.parse(ev.data) as RecognitionEvent);
    };
    source.addEventListener("end", () => {
      this.close();
      this.callbacks.onEnd();
    });
    source.onerror = () => {
      if (this.closed) return;
      source.close();
      this.scheduleReconnect(() => this.connect(), this.retryMs);
    };
  }

  close(): void {
    this.closed = true;
    this.source?.close();
    this.source = null;
  }
}
