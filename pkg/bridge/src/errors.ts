export class UnreadableSource extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'UnreadableSource';
  }
}

export class NoTensorsFound extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'NoTensorsFound';
  }
}

export class NetworkUnavailable extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'NetworkUnavailable';
  }
}

export class NothingMatched extends Error {
  readonly reasons: Array<[string, string]>;

  constructor(message: string, reasons: Array<[string, string]> = []) {
    super(message);
    this.name = 'NothingMatched';
    this.reasons = reasons;
  }
}

export class PickleError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'PickleError';
  }
}
