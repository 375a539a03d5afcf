// Server-sent recognition events with automatic reconnect. Reconnection
// never duplicates table rows because consumers resync keyed state from
// the records endpoint in onConnect instead of accumulating rows blindly.
export class RecognitionStream {
    url;
    factory;
    callbacks;
    scheduleReconnect;
    source = null;
    closed = false;
    retryMs;
    constructor(url, factory, callbacks, scheduleReconnect = (fn, ms) => {
        setTimeout(fn, ms);
    }, retryMs = 1000) {
        this.url = url;
        this.factory = factory;
        this.callbacks = callbacks;
        this.scheduleReconnect = scheduleReconnect;
        this.retryMs = retryMs;
    }
    connect() {
        if (this.closed)
            return;
        const source = this.factory(this.url);
        this.source = source;
        this.callbacks.onConnect();
        source.onmessage = (ev) => {
            this.callbacks.onEvent(JSON.parse(ev.data));
        };
        source.addEventListener("end", () => {
            this.close();
            this.callbacks.onEnd();
        });
        source.onerror = () => {
            if (this.closed)
                return;
            source.close();
            this.scheduleReconnect(() => this.connect(), this.retryMs);
        };
    }
    close() {
        this.closed = true;
        this.source?.close();
        this.source = null;
    }
}
