export class ApiError extends Error {
    code;
    status;
    constructor(body) {
        super(body.message);
        this.code = body.code;
        this.status = body.http_status;
    }
}
async function asError(resp) {
    try {
        return new ApiError((await resp.json()));
    }
    catch {
        return new ApiError({ code: "HTTP_" + resp.status, message: resp.statusText, http_status: resp.status });
    }
}
// Thin typed wrapper over the service endpoints. fetch is injected so the
// client runs identically in the browser and under node tests.
export class ApiClient {
    base;
    fetchFn;
    constructor(base, fetchFn = fetch.bind(globalThis)) {
        this.base = base;
        this.fetchFn = fetchFn;
    }
    async json(path, init) {
        const resp = await this.fetchFn(this.base + path, init);
        if (!resp.ok)
            throw await asError(resp);
        return (await resp.json());
    }
    registerPerson(id, name) {
        return this.json("/api/persons", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ id, name }),
        });
    }
    uploadSample(id, ppm) {
        return this.json(`/api/persons/${id}/samples`, {
            method: "POST",
            headers: { "Content-Type": "image/x-portable-pixmap" },
            body: ppm,
        });
    }
    finalizePerson(id, kMin) {
        return this.json(`/api/persons/${id}/finalize`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(kMin === undefined ? {} : { k_min: kMin }),
        });
    }
    status() {
        return this.json("/api/status");
    }
    startSession(name, debounceS, startedAt) {
        const body = { name, debounce_s: debounceS };
        if (startedAt !== undefined)
            body.started_at = startedAt;
        return this.json("/api/sessions", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
    }
    pushFrame(sessionId, ppm, timestamp) {
        return this.json(`/api/sessions/${sessionId}/frames`, {
            method: "POST",
            headers: { "Content-Type": "image/x-portable-pixmap", "X-Timestamp": timestamp },
            body: ppm,
        });
    }
    endSession(sessionId) {
        return this.json(`/api/sessions/${sessionId}/end`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: "{}",
        });
    }
    listSessions() {
        return this.json("/api/sessions");
    }
    sessionRecords(sessionId) {
        return this.json(`/api/sessions/${sessionId}/records`);
    }
    exportCsvUrl(sessionId) {
        return `${this.base}/api/sessions/${sessionId}/export.csv`;
    }
    eventStreamUrl(sessionId) {
        return `${this.base}/api/sessions/${sessionId}/events`;
    }
    async fetchCsv(sessionId) {
        const resp = await this.fetchFn(this.exportCsvUrl(sessionId));
        if (!resp.ok)
            throw await asError(resp);
        return new Uint8Array(await resp.arrayBuffer());
    }
}
