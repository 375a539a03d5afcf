// In-memory stand-ins for the service, the camera, and EventSource, so
// the console's logic is exercised end to end under node without a
// browser or a live backend.
// Frame protocol: the first pixel's red channel is a marker byte.
// 0 = blank (NO_FACE), 1/2/3 = enrolled-identity face, 9 = stranger,
// 99 = two faces in frame.
export const MARKER_TO_PERSON = { 1: "s001", 2: "s002", 3: "s003" };
export function makeFrame(marker, w = 8, h = 8) {
    const data = new Uint8ClampedArray(w * h * 4);
    data.fill(128);
    data[0] = marker;
    data[3] = 255;
    return { width: w, height: h, data };
}
export class StubCamera {
    frames;
    started = 0;
    stopped = 0;
    grabs = 0;
    deny = false;
    constructor(frames) {
        this.frames = frames;
    }
    async start() {
        if (this.deny)
            throw new Error("denied");
        this.started += 1;
    }
    grab() {
        this.grabs += 1;
        return this.frames();
    }
    stop() {
        this.stopped += 1;
    }
}
export class FakeEventSource {
    onmessage = null;
    onerror = null;
    closed = false;
    endListeners = [];
    addEventListener(type, listener) {
        if (type === "end")
            this.endListeners.push(listener);
    }
    close() {
        this.closed = true;
    }
    emit(payload) {
        this.onmessage?.({ data: JSON.stringify(payload) });
    }
    emitEnd() {
        for (const fn of this.endListeners)
            fn();
    }
    fail() {
        this.onerror?.(new Error("stream error"));
    }
}
function parseMarker(body) {
    // skip the three header lines of the P6 payload
    let newlines = 0;
    let i = 0;
    while (i < body.length && newlines < 3) {
        if (body[i] === 0x0a)
            newlines += 1;
        i += 1;
    }
    return body[i];
}
function parseUtc(text) {
    return Date.parse(text);
}
// The service contract, in memory. Recognition is scripted off the frame
// marker; counting follows the same debounce rule as the real engine.
export class FakeService {
    persons = new Map();
    sessions = new Map();
    attendance = new Map();
    modelsReady = true;
    uploads = 0;
    sources = [];
    pendingUploads = [];
    holdUploads = false;
    streamFactory() {
        return () => {
            const source = new FakeEventSource();
            this.sources.push(source);
            return source;
        };
    }
    error(status, code) {
        return new Response(JSON.stringify({ code, message: code, http_status: status }), {
            status,
            headers: { "Content-Type": "application/json" },
        });
    }
    ok(body, status = 200) {
        return new Response(JSON.stringify(body), {
            status,
            headers: { "Content-Type": "application/json" },
        });
    }
    exportCsv(sessionId) {
        const rows = [...this.attendance.values()]
            .filter((r) => r.session_id === sessionId)
            .sort((a, b) => (a.person_id < b.person_id ? -1 : 1));
        const lines = ["person_id,name,count,first_seen_utc,last_seen_utc"];
        for (const r of rows) {
            lines.push(`${r.person_id},${r.name},${r.count},${r.first_seen},${r.last_seen}`);
        }
        return lines.join("\n") + "\n";
    }
    fetch = async (input, init) => {
        const url = String(input);
        const path = url.replace(/^[a-z]+:\/\/[^/]+/, "");
        const method = init?.method ?? "GET";
        const body = init?.body;
        let m;
        if (method === "POST" && path === "/api/persons") {
            const { id, name } = JSON.parse(String(body));
            if (!/^[A-Za-z0-9_-]{1,64}$/.test(id))
                return this.error(422, "INVALID_ID");
            if (this.persons.has(id))
                return this.error(409, "DUPLICATE_ID");
            const record = { person_id: id, name, sample_count: 0, status: "enrolling" };
            this.persons.set(id, record);
            return this.ok(record, 201);
        }
        if (method === "POST" && (m = path.match(/^\/api\/persons\/([^/]+)\/samples$/))) {
            if (this.holdUploads)
                await new Promise((resolve) => this.pendingUploads.push(resolve));
            const person = this.persons.get(m[1]);
            if (!person)
                return this.error(404, "PERSON_NOT_FOUND");
            const marker = parseMarker(body);
            if (marker === 0)
                return this.error(422, "NO_FACE");
            if (marker === 99)
                return this.error(422, "MULTIPLE_FACES");
            person.sample_count += 1;
            this.uploads += 1;
            return this.ok({ stored: true, sample_count: person.sample_count });
        }
        if (method === "POST" && (m = path.match(/^\/api\/persons\/([^/]+)\/finalize$/))) {
            const person = this.persons.get(m[1]);
            if (!person)
                return this.error(404, "PERSON_NOT_FOUND");
            const kMin = JSON.parse(String(body)).k_min ?? 50;
            if (person.sample_count < kMin)
                return this.error(409, "INSUFFICIENT_SAMPLES");
            person.status = "ready";
            return this.ok(person);
        }
        if (method === "GET" && path === "/api/status") {
            return this.ok({
                models_ready: this.modelsReady,
                persons: this.persons.size,
                sessions: this.sessions.size,
                cascade_installed: true,
            });
        }
        if (method === "POST" && path === "/api/sessions") {
            const { name, debounce_s, started_at } = JSON.parse(String(body));
            const session = {
                session_id: `sess-${String(this.sessions.size + 1).padStart(4, "0")}`,
                name,
                state: "running",
                started_at: started_at ?? "2026-06-01T09:00:00Z",
                ended_at: null,
                debounce_s,
                events_total: 0,
            };
            this.sessions.set(session.session_id, session);
            return this.ok(session, 201);
        }
        if (method === "GET" && path === "/api/sessions") {
            return this.ok({ sessions: [...this.sessions.values()] });
        }
        if (method === "POST" && (m = path.match(/^\/api\/sessions\/([^/]+)\/frames$/))) {
            const session = this.sessions.get(m[1]);
            if (!session)
                return this.error(404, "SESSION_NOT_FOUND");
            if (session.state !== "running")
                return this.error(409, "SESSION_NOT_RUNNING");
            const stamp = (init?.headers)["X-Timestamp"];
            const marker = parseMarker(body);
            const events = [];
            if (marker !== 0) {
                const personId = MARKER_TO_PERSON[marker] ?? "UNKNOWN";
                let marked = false;
                if (personId !== "UNKNOWN") {
                    const key = `${session.session_id}:${personId}`;
                    const existing = this.attendance.get(key);
                    if (!existing) {
                        this.attendance.set(key, {
                            session_id: session.session_id,
                            person_id: personId,
                            name: this.persons.get(personId)?.name ?? personId,
                            count: 1,
                            first_seen: stamp,
                            last_seen: stamp,
                        });
                        marked = true;
                    }
                    else {
                        const debounce = session.debounce_s;
                        const elapsed = (parseUtc(stamp) - parseUtc(existing.last_seen)) / 1000;
                        existing.last_seen = stamp;
                        if (debounce !== null && elapsed >= debounce) {
                            existing.count += 1;
                            marked = true;
                        }
                    }
                }
                events.push({
                    box: { x: 10, y: 12, w: 24, h: 24 },
                    person_id: personId,
                    top_prob: personId === "UNKNOWN" ? 0.41 : 0.93,
                    timestamp: stamp,
                    marked,
                });
            }
            session.events_total += events.length;
            for (const source of this.sources)
                for (const ev of events)
                    source.emit(ev);
            return this.ok({ events });
        }
        if (method === "POST" && (m = path.match(/^\/api\/sessions\/([^/]+)\/end$/))) {
            const session = this.sessions.get(m[1]);
            if (!session)
                return this.error(404, "SESSION_NOT_FOUND");
            if (session.state !== "running")
                return this.error(409, "SESSION_NOT_RUNNING");
            session.state = "ended";
            session.ended_at = "2026-06-01T10:00:00Z";
            for (const source of this.sources)
                source.emitEnd();
            const marked = [...this.attendance.values()].filter((r) => r.session_id === session.session_id);
            return this.ok({
                session_id: session.session_id,
                persons_marked: marked.length,
                total_events: session.events_total,
            });
        }
        if (method === "GET" && (m = path.match(/^\/api\/sessions\/([^/]+)\/records$/))) {
            if (!this.sessions.has(m[1]))
                return this.error(404, "SESSION_NOT_FOUND");
            const rows = [...this.attendance.values()]
                .filter((r) => r.session_id === m[1])
                .sort((a, b) => (a.person_id < b.person_id ? -1 : 1));
            return this.ok({ records: rows });
        }
        if (method === "GET" && (m = path.match(/^\/api\/sessions\/([^/]+)\/export\.csv$/))) {
            if (!this.sessions.has(m[1]))
                return this.error(404, "SESSION_NOT_FOUND");
            return new Response(this.exportCsv(m[1]), {
                status: 200,
                headers: { "Content-Type": "text/csv; charset=utf-8" },
            });
        }
        return this.error(404, "NOT_FOUND");
    };
    releaseUploads() {
        for (const resolve of this.pendingUploads.splice(0))
            resolve();
    }
}
