import { ApiClient } from "./api.js";
import { BrowserCamera, nowIso } from "./camera.js";
import { loadConfig } from "./config.js";
import { SessionDashboard } from "./dashboard.js";
import { drawOverlay } from "./overlay.js";
import { RecordsView } from "./records.js";
import { EnrollmentWizard } from "./wizard.js";
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing #${id}`);
    return node;
}
function show(view) {
    for (const name of ["enroll", "session", "records"]) {
        el(`view-${name}`).style.display = name === view ? "block" : "none";
        el(`nav-${name}`).classList.toggle("active", name === view);
    }
}
function renderTable(tbody, rows) {
    tbody.innerHTML = "";
    for (const row of rows) {
        const tr = document.createElement("tr");
        for (const cell of [row.person_id, row.name, String(row.count), row.first_seen, row.last_seen]) {
            const td = document.createElement("td");
            td.textContent = cell;
            tr.appendChild(td);
        }
        tbody.appendChild(tr);
    }
}
async function main() {
    const cfg = await loadConfig(fetch.bind(globalThis));
    const api = new ApiClient(cfg.api_base_url);
    el("nav-enroll").onclick = () => show("enroll");
    el("nav-session").onclick = () => show("session");
    el("nav-records").onclick = () => {
        show("records");
        void loadRecords();
    };
    // --- enrollment wizard ------------------------------------------------
    let wizardTimer;
    el("enroll-start").onclick = async () => {
        const id = el("enroll-id").value.trim();
        const name = el("enroll-name").value.trim();
        const status = el("enroll-status");
        const camera = new BrowserCamera(el("enroll-video"));
        const wizard = new EnrollmentWizard(api, camera, cfg.target_samples, {
            onProgress: (n, target) => {
                status.textContent = `captured ${n}/${target}`;
            },
            onFrameRejected: (code) => {
                status.textContent = `${status.textContent?.split(" — ")[0]} — last frame: ${code}`;
            },
            onDone: (record) => {
                window.clearInterval(wizardTimer);
                status.textContent = `${record.person_id} enrolled with ${record.sample_count} samples`;
            },
            onFatal: (code, message) => {
                window.clearInterval(wizardTimer);
                status.textContent = `error ${code}: ${message}`;
            },
        });
        if (await wizard.begin(id, name)) {
            wizardTimer = window.setInterval(() => void wizard.tick(), cfg.capture_interval_ms);
        }
    };
    // --- session dashboard --------------------------------------------------
    let dashboard = null;
    let sessionTimer;
    const overlayCanvas = el("session-overlay");
    const video = el("session-video");
    el("session-start").onclick = async () => {
        const name = el("session-name").value.trim() || "session";
        const debounce = parseInt(el("session-debounce").value, 10);
        const camera = new BrowserCamera(video);
        dashboard = new SessionDashboard(api, camera, {
            onOverlay: (events) => {
                overlayCanvas.width = video.clientWidth;
                overlayCanvas.height = video.clientHeight;
                const ctx = overlayCanvas.getContext("2d");
                const frame = camera.grab();
                if (ctx && frame)
                    drawOverlay(ctx, events, frame.width, frame.height);
            },
            onTable: (rows) => renderTable(el("session-table"), rows),
            onEnded: (csvUrl) => {
                const link = el("session-csv");
                link.href = csvUrl;
                link.style.display = "inline";
                el("session-status").textContent = "session ended";
            },
            onError: (code, message) => {
                el("session-status").textContent = `error ${code}: ${message}`;
            },
        }, nowIso);
        const ok = await dashboard.begin(name, Number.isFinite(debounce) ? debounce : 30, (url) => new EventSource(url));
        if (ok) {
            el("session-status").textContent = `running ${dashboard.session?.session_id}`;
            sessionTimer = window.setInterval(() => void dashboard?.tick(), cfg.capture_interval_ms);
        }
    };
    el("session-stop").onclick = async () => {
        window.clearInterval(sessionTimer);
        await dashboard?.stop();
    };
    // --- records ---------------------------------------------------------------
    const records = new RecordsView(api);
    async function loadRecords() {
        const model = await records.load();
        const list = el("records-list");
        list.innerHTML = "";
        if (model.empty) {
            list.textContent = "no sessions yet";
            return;
        }
        for (const session of model.sessions) {
            const item = document.createElement("div");
            item.className = "record-item";
            const head = document.createElement("div");
            head.textContent = `${session.session_id} — ${session.name} (${session.state})`;
            const csv = document.createElement("a");
            csv.textContent = "CSV";
            csv.href = records.csvUrl(session.session_id);
            const table = document.createElement("tbody");
            head.onclick = async () => {
                renderTable(table, await records.expand(session.session_id));
            };
            const tableEl = document.createElement("table");
            tableEl.innerHTML = "<thead><tr><th>person</th><th>name</th><th>count</th><th>first</th><th>last</th></tr></thead>";
            tableEl.appendChild(table);
            item.append(head, csv, tableEl);
            list.appendChild(item);
        }
    }
    show("enroll");
}
void main();
