// Payload shapes of the attendance service API. The console renders these
// verbatim; it performs no recognition or counting of its own.
export {};
