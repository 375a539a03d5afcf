import assert from "node:assert/strict";
import { test } from "node:test";

import { ApiClient } from "../src/api.js";
import type { PersonRecord } from "../src/types.js";
import { EnrollmentWizard, WizardCallbacks } from "../src/wizard.js";
import { FakeService, StubCamera, makeFrame } from "./helpers.js";

function collector() {
  const log: { progress: [number, number][]; rejected: string[]; done: PersonRecord[]; fatal: string[] } = {
    progress: [],
    rejected: [],
    done: [],
    fatal: [],
  };
  const callbacks: WizardCallbacks = {
    onProgress: (n, t) => log.progress.push([n, t]),
    onFrameRejected: (code) => log.rejected.push(code),
    onDone: (record) => log.done.push(record),
    onFatal: (code) => log.fatal.push(code),
  };
  return { log, callbacks };
}

test("wizard reaches the 50-sample target and finalizes", async () => {
  const service = new FakeService();
  const api = new ApiClient("", service.fetch);
  const camera = new StubCamera(() => makeFrame(1));
  const { log, callbacks } = collector();
  const wizard = new EnrollmentWizard(api, camera, 50, callbacks);

  assert.equal(await wizard.begin("s001", "Ada"), true);
  while (wizard.state === "capturing") await wizard.tick();

  assert.equal(wizard.state, "done");
  assert.deepEqual(log.progress.at(-1), [50, 50]);
  assert.equal(log.done.length, 1);
  assert.equal(log.done[0].status, "ready");
  assert.equal(log.done[0].sample_count, 50);
  assert.equal(service.uploads, 50);
  assert.equal(camera.stopped, 1);
});

test("no frame leaves the wizard after completion", async () => {
  const service = new FakeService();
  const api = new ApiClient("", service.fetch);
  const camera = new StubCamera(() => makeFrame(1));
  const { callbacks } = collector();
  const wizard = new EnrollmentWizard(api, camera, 5, callbacks);
  await wizard.begin("s001", "Ada");
  while (wizard.state === "capturing") await wizard.tick();
  const uploadsAtDone = service.uploads;
  await wizard.tick();
  await wizard.tick();
  assert.equal(service.uploads, uploadsAtDone);
});

test("rejected frames keep progress and surface the code", async () => {
  const service = new FakeService();
  const api = new ApiClient("", service.fetch);
  const frames = [makeFrame(0), makeFrame(1), makeFrame(99), makeFrame(1), makeFrame(1)];
  const camera = new StubCamera(() => frames.shift() ?? makeFrame(1));
  const { log, callbacks } = collector();
  const wizard = new EnrollmentWizard(api, camera, 3, callbacks);
  await wizard.begin("s001", "Ada");
  while (wizard.state === "capturing") await wizard.tick();
  assert.deepEqual(log.rejected, ["NO_FACE", "MULTIPLE_FACES"]);
  assert.equal(service.uploads, 3);
  assert.deepEqual(log.progress.at(-1), [3, 3]);
});

test("duplicate id aborts before any capture", async () => {
  const service = new FakeService();
  const api = new ApiClient("", service.fetch);
  await api.registerPerson("s001", "Ada");
  const camera = new StubCamera(() => makeFrame(1));
  const { log, callbacks } = collector();
  const wizard = new EnrollmentWizard(api, camera, 5, callbacks);
  assert.equal(await wizard.begin("s001", "Ada"), false);
  assert.deepEqual(log.fatal, ["DUPLICATE_ID"]);
  assert.equal(camera.started, 0);
  assert.equal(wizard.state, "failed");
});

test("camera denial aborts cleanly", async () => {
  const service = new FakeService();
  const api = new ApiClient("", service.fetch);
  const camera = new StubCamera(() => makeFrame(1));
  camera.deny = true;
  const { log, callbacks } = collector();
  const wizard = new EnrollmentWizard(api, camera, 5, callbacks);
  assert.equal(await wizard.begin("s002", "Bo"), false);
  assert.deepEqual(log.fatal, ["CAMERA_DENIED"]);
});

test("only one upload is in flight at a time", async () => {
  const service = new FakeService();
  service.holdUploads = true;
  const api = new ApiClient("", service.fetch);
  const camera = new StubCamera(() => makeFrame(1));
  const { callbacks } = collector();
  const wizard = new EnrollmentWizard(api, camera, 5, callbacks);
  await wizard.begin("s001", "Ada");

  const first = wizard.tick(); // blocks inside the fake service
  const second = wizard.tick(); // must be dropped, not queued
  await second;
  assert.equal(service.uploads, 0);
  service.releaseUploads();
  await first;
  assert.equal(service.uploads, 1);
  assert.equal(camera.grabs, 1); // the overlapping tick never grabbed
});
