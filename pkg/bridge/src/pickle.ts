/**
 * Minimal pickle (protocol 2) reader for checkpoint archives.
 *
 * This is a data decoder, not a pickle implementation: only the opcodes a
 * checkpoint state dict actually contains are handled, REDUCE is restricted
 * to an allowlist of tensor-rebuilding constructors, and nothing is ever
 * executed. Unknown constructors become opaque markers that the converter
 * drops with a warning.
 */
import { PickleError } from './errors.js';

export class GlobalRef {
  constructor(readonly module: string, readonly name: string) {}
  get fullName(): string {
    return `${this.module}.${this.name}`;
  }
}

export class Tuple {
  constructor(readonly items: unknown[]) {}
}

export interface StorageRef {
  storageType: string;
  key: string;
  location: string;
  numel: number;
}

export class TensorStub {
  constructor(
    readonly storage: StorageRef,
    readonly storageOffset: number,
    readonly size: number[],
    readonly stride: number[],
  ) {}
}

export class Opaque {
  constructor(readonly constructorName: string) {}
}

const MARK_SENTINEL = Symbol('mark');

export function parsePickle(data: Buffer): unknown {
  const stack: unknown[] = [];
  const memo = new Map<number, unknown>();
  let pos = 0;

  const need = (n: number) => {
    if (pos + n > data.length) {
      throw new PickleError(`truncated stream at offset ${pos}`);
    }
  };
  const readLine = (): string => {
    const end = data.indexOf(0x0a, pos);
    if (end < 0) throw new PickleError(`unterminated line at offset ${pos}`);
    const text = data.subarray(pos, end).toString('utf-8');
    pos = end + 1;
    return text;
  };
  const popMark = (): unknown[] => {
    const index = stack.lastIndexOf(MARK_SENTINEL);
    if (index < 0) throw new PickleError('no MARK on stack');
    const items = stack.splice(index + 1);
    stack.pop();
    return items;
  };
  const setItems = (target: unknown, pairs: unknown[]) => {
    if (!(target instanceof Map)) {
      throw new PickleError(`SETITEMS on ${typeof target}`);
    }
    for (let i = 0; i + 1 < pairs.length; i += 2) {
      target.set(pairs[i], pairs[i + 1]);
    }
  };

  while (pos < data.length) {
    const op = data[pos++];
    switch (op) {
      case 0x80: // PROTO
        need(1);
        pos += 1;
        break;
      case 0x2e: // STOP
        return stack.pop();
      case 0x28: // MARK
        stack.push(MARK_SENTINEL);
        break;
      case 0x7d: // EMPTY_DICT
        stack.push(new Map());
        break;
      case 0x5d: // EMPTY_LIST
        stack.push([]);
        break;
      case 0x29: // EMPTY_TUPLE
        stack.push(new Tuple([]));
        break;
      case 0x74: // TUPLE
        stack.push(new Tuple(popMark()));
        break;
      case 0x85: // TUPLE1
        stack.push(new Tuple(stack.splice(-1)));
        break;
      case 0x86: // TUPLE2
        stack.push(new Tuple(stack.splice(-2)));
        break;
      case 0x87: // TUPLE3
        stack.push(new Tuple(stack.splice(-3)));
        break;
      case 0x4e: // NONE
        stack.push(null);
        break;
      case 0x88: // NEWTRUE
        stack.push(true);
        break;
      case 0x89: // NEWFALSE
        stack.push(false);
        break;
      case 0x4b: // BININT1
        need(1);
        stack.push(data[pos]);
        pos += 1;
        break;
      case 0x4d: // BININT2
        need(2);
        stack.push(data.readUInt16LE(pos));
        pos += 2;
        break;
      case 0x4a: // BININT
        need(4);
        stack.push(data.readInt32LE(pos));
        pos += 4;
        break;
      case 0x8a: { // LONG1
        need(1);
        const length = data[pos];
        pos += 1;
        need(length);
        let value = 0n;
        for (let i = length - 1; i >= 0; i--) {
          value = (value << 8n) | BigInt(data[pos + i]);
        }
        if (length > 0 && data[pos + length - 1] & 0x80) {
          value -= 1n << BigInt(8 * length);
        }
        pos += length;
        stack.push(value <= BigInt(Number.MAX_SAFE_INTEGER) ? Number(value) : value);
        break;
      }
      case 0x47: // BINFLOAT (big-endian double)
        need(8);
        stack.push(data.readDoubleBE(pos));
        pos += 8;
        break;
      case 0x58: { // BINUNICODE
        need(4);
        const length = data.readUInt32LE(pos);
        pos += 4;
        need(length);
        stack.push(data.subarray(pos, pos + length).toString('utf-8'));
        pos += length;
        break;
      }
      case 0x55: { // SHORT_BINSTRING
        need(1);
        const length = data[pos];
        pos += 1;
        need(length);
        stack.push(data.subarray(pos, pos + length).toString('latin1'));
        pos += length;
        break;
      }
      case 0x71: // BINPUT
        need(1);
        memo.set(data[pos], stack[stack.length - 1]);
        pos += 1;
        break;
      case 0x72: // LONG_BINPUT
        need(4);
        memo.set(data.readUInt32LE(pos), stack[stack.length - 1]);
        pos += 4;
        break;
      case 0x68: { // BINGET
        need(1);
        const key = data[pos];
        pos += 1;
        if (!memo.has(key)) throw new PickleError(`memo miss ${key}`);
        stack.push(memo.get(key));
        break;
      }
      case 0x6a: { // LONG_BINGET
        need(4);
        const key = data.readUInt32LE(pos);
        pos += 4;
        if (!memo.has(key)) throw new PickleError(`memo miss ${key}`);
        stack.push(memo.get(key));
        break;
      }
      case 0x63: { // GLOBAL
        const module = readLine();
        const name = readLine();
        stack.push(new GlobalRef(module, name));
        break;
      }
      case 0x52: { // REDUCE
        const args = stack.pop();
        const callable = stack.pop();
        stack.push(reduce(callable, args));
        break;
      }
      case 0x51: { // BINPERSID
        const pid = stack.pop();
        stack.push(persistentLoad(pid));
        break;
      }
      case 0x73: { // SETITEM
        const value = stack.pop();
        const key = stack.pop();
        setItems(stack[stack.length - 1], [key, value]);
        break;
      }
      case 0x75: { // SETITEMS
        const pairs = popMark();
        setItems(stack[stack.length - 1], pairs);
        break;
      }
      case 0x61: { // APPEND
        const value = stack.pop();
        const target = stack[stack.length - 1];
        if (!Array.isArray(target)) throw new PickleError('APPEND on non-list');
        target.push(value);
        break;
      }
      case 0x65: { // APPENDS
        const items = popMark();
        const target = stack[stack.length - 1];
        if (!Array.isArray(target)) throw new PickleError('APPENDS on non-list');
        target.push(...items);
        break;
      }
      default:
        throw new PickleError(
          `unsupported opcode 0x${op.toString(16)} at offset ${pos - 1}`,
        );
    }
  }
  throw new PickleError('stream ended without STOP');
}

function reduce(callable: unknown, args: unknown): unknown {
  if (!(callable instanceof GlobalRef)) {
    throw new PickleError('REDUCE of a non-global callable');
  }
  const argItems = args instanceof Tuple ? args.items : [];
  switch (callable.fullName) {
    case 'torch._utils._rebuild_tensor_v2': {
      const [storage, offset, size, stride] = argItems;
      if (!isStorageRef(storage) || !(size instanceof Tuple) || !(stride instanceof Tuple)) {
        throw new PickleError('malformed _rebuild_tensor_v2 arguments');
      }
      return new TensorStub(
        storage,
        Number(offset),
        size.items.map(Number),
        stride.items.map(Number),
      );
    }
    case 'torch._utils._rebuild_parameter':
      return argItems[0];
    case 'collections.OrderedDict': {
      const map = new Map();
      const pairs = argItems[0];
      if (Array.isArray(pairs)) {
        for (const pair of pairs) {
          if (pair instanceof Tuple && pair.items.length === 2) {
            map.set(pair.items[0], pair.items[1]);
          }
        }
      }
      return map;
    }
    case 'torch.Size':
      return argItems[0];
    default:
      return new Opaque(callable.fullName);
  }
}

function persistentLoad(pid: unknown): StorageRef {
  if (!(pid instanceof Tuple) || pid.items[0] !== 'storage') {
    throw new PickleError('unsupported persistent id');
  }
  const [, storageType, key, location, numel] = pid.items;
  if (!(storageType instanceof GlobalRef)) {
    throw new PickleError('persistent id without a storage type');
  }
  return {
    storageType: storageType.name,
    key: String(key),
    location: String(location),
    numel: Number(numel),
  };
}

function isStorageRef(value: unknown): value is StorageRef {
  return (
    typeof value === 'object' && value !== null &&
    'storageType' in value && 'key' in value && 'numel' in value
  );
}
