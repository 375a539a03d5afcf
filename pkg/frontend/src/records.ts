import { ApiClient } from "./api.js";
import type { AttendanceRecord, Session } from "./types.js";

export interface RecordsModel {
  sessions: Session[];
  empty: boolean;
  expanded: Map<string, AttendanceRecord[]>;
}

// Past sessions with expandable attendance rows; rows mirror the CSV
// columns and come straight from the records endpoint.
export class RecordsView {
  model: RecordsModel = { sessions: [], empty: true, expanded: new Map() };

  constructor(private api: ApiClient) {}

  async load(): Promise<RecordsModel> {
    const { sessions } = await this.api.listSessions();
    this.model = { sessions, empty: sessions.length === 0, expanded: new Map() };
    return this.model;
  }

  async expand(sessionId: string): Promise<AttendanceRecord[]> {
    const { records } = await this.api.sessionRecords(sessionId);
    this.model.expanded.set(sessionId, records);
    return records;
  }

  csvUrl(sessionId: string): string {
    return this.api.exportCsvUrl(sessionId);
  }
}
