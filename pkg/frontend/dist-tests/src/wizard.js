import { ApiError } from "./api.js";
import { encodePpm } from "./ppm.js";
// Drives enrollment: register, capture frames until the sample target is
// reached, then finalize. One upload in flight at a time; frames grabbed
// while an upload is pending are dropped, not queued. No frame leaves
// this class after completion or failure.
export class EnrollmentWizard {
    api;
    camera;
    target;
    callbacks;
    state = "idle";
    progress = 0;
    inflight = false;
    personId = "";
    constructor(api, camera, target, callbacks) {
        this.api = api;
        this.camera = camera;
        this.target = target;
        this.callbacks = callbacks;
    }
    async begin(id, name) {
        try {
            await this.api.registerPerson(id, name);
        }
        catch (err) {
            if (err instanceof ApiError) {
                this.state = "failed";
                this.callbacks.onFatal(err.code, err.message);
                return false;
            }
            throw err;
        }
        try {
            await this.camera.start();
        }
        catch {
            this.state = "failed";
            this.callbacks.onFatal("CAMERA_DENIED", "camera permission was not granted");
            return false;
        }
        this.personId = id;
        this.state = "capturing";
        this.callbacks.onProgress(0, this.target);
        return true;
    }
    async tick() {
        if (this.state !== "capturing" || this.inflight)
            return;
        const frame = this.camera.grab();
        if (!frame)
            return;
        this.inflight = true;
        try {
            const { sample_count } = await this.api.uploadSample(this.personId, encodePpm(frame));
            this.progress = sample_count;
            this.callbacks.onProgress(this.progress, this.target);
            if (this.progress >= this.target) {
                await this.finish();
            }
        }
        catch (err) {
            if (err instanceof ApiError && (err.code === "NO_FACE" || err.code === "MULTIPLE_FACES")) {
                this.callbacks.onFrameRejected(err.code);
            }
            else if (err instanceof ApiError) {
                this.state = "failed";
                this.camera.stop();
                this.callbacks.onFatal(err.code, err.message);
            }
            else {
                throw err;
            }
        }
        finally {
            this.inflight = false;
        }
    }
    async finish() {
        this.state = "done"; // set before awaiting so no further frame is sent
        this.camera.stop();
        const record = await this.api.finalizePerson(this.personId, this.target);
        this.callbacks.onDone(record);
    }
    abort() {
        if (this.state === "capturing") {
            this.state = "failed";
            this.camera.stop();
        }
    }
}
