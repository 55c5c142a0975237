export class UnreadableSource extends Error {
    constructor(message) {
        super(message);
        this.name = 'UnreadableSource';
    }
}
export class NoTensorsFound extends Error {
    constructor(message) {
        super(message);
        this.name = 'NoTensorsFound';
    }
}
export class NetworkUnavailable extends Error {
    constructor(message) {
        super(message);
        this.name = 'NetworkUnavailable';
    }
}
export class NothingMatched extends Error {
    reasons;
    constructor(message, reasons = []) {
        super(message);
        this.name = 'NothingMatched';
        this.reasons = reasons;
    }
}
export class PickleError extends Error {
    constructor(message) {
        super(message);
        this.name = 'PickleError';
    }
}
//# sourceMappingURL=errors.js.map