// Past sessions with expandable attendance rows; rows mirror the CSV
// columns and come straight from the records endpoint.
export class RecordsView {
    api;
    model = { sessions: [], empty: true, expanded: new Map() };
    constructor(api) {
        this.api = api;
    }
    async load() {
        const { sessions } = await this.api.listSessions();
        this.model = { sessions, empty: sessions.length === 0, expanded: new Map() };
        return this.model;
    }
    async expand(sessionId) {
        const { records } = await this.api.sessionRecords(sessionId);
        this.model.expanded.set(sessionId, records);
        return records;
    }
    csvUrl(sessionId) {
        return this.api.exportCsvUrl(sessionId);
    }
}
