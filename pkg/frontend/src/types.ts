// Payload shapes of the attendance service API. The console renders these
// verbatim; it performs no recognition or counting of its own.

export interface UiConfig {
  api_base_url: string;
  capture_interval_ms: number;
  target_samples: number;
}

export interface PersonRecord {
  person_id: string;
  name: string;
  sample_count: number;
  status: "enrolling" | "ready";
}

export interface Session {
  session_id: string;
  name: string;
  state: "running" | "ended";
  started_at: string;
  ended_at: string | null;
  debounce_s: number | null;
  events_total: number;
}

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface RecognitionEvent {
  box: Box;
  person_id: string; // "UNKNOWN" when rejected
  top_prob: number;
  timestamp: string;
  marked: boolean;
}

export interface AttendanceRecord {
  session_id: string;
  person_id: string;
  name: string;
  count: number;
  first_seen: string;
  last_seen: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  http_status: number;
}

// A captured camera frame, decoupled from the DOM ImageData type so the
// capture/upload logic runs headless under node tests.
export interface RawFrame {
  width: number;
  height: number;
  data: Uint8ClampedArray; // RGBA, row-major
}
