/**
 * Writer (and verifying parser) for the weightfoundry checkpoint container.
 *
 * Layout: bytes 0-7 little-endian u64 header length H, bytes 8..8+H UTF-8
 * JSON mapping tensor name -> {dtype, shape, data_offsets}, then one
 * contiguous little-endian data buffer. Offsets are relative to byte 8+H.
 */

export type ContainerDtype = 'F32' | 'F64';

export interface TensorPayload {
  name: string;
  shape: number[];
  dtype: ContainerDtype;
  /** little-endian row-major element bytes */
  data: Buffer;
}

export interface ParsedContainer {
  tensors: TensorPayload[];
  metadata: Record<string, string>;
}

const ELEMENT_SIZE: Record<ContainerDtype, number> = { F32: 4, F64: 8 };

export function elementCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function writeContainer(
  tensors: TensorPayload[],
  metadata: Record<string, string> = {},
): Buffer {
  const sorted = [...tensors].sort((a, b) => (a.name < b.name ? -1 : a.name > b.name ? 1 : 0));
  const header: Record<string, unknown> = {};
  if (Object.keys(metadata).length > 0) {
    header['__metadata__'] = sortedObject(metadata);
  }
  const chunks: Buffer[] = [];
  let cursor = 0;
  for (const tensor of sorted) {
    const expected = elementCount(tensor.shape) * ELEMENT_SIZE[tensor.dtype];
    if (tensor.data.length !== expected) {
      throw new Error(
        `${tensor.name}: ${tensor.data.length} bytes for shape [${tensor.shape}] (${expected} expected)`,
      );
    }
    header[tensor.name] = {
      dtype: tensor.dtype,
      shape: tensor.shape,
      data_offsets: [cursor, cursor + tensor.data.length],
    };
    chunks.push(tensor.data);
    cursor += tensor.data.length;
  }
  const headerBytes = Buffer.from(JSON.stringify(sortedObject(header)), 'utf-8');
  const prefix = Buffer.alloc(8);
  prefix.writeBigUInt64LE(BigInt(headerBytes.length), 0);
  return Buffer.concat([prefix, headerBytes, ...chunks]);
}

export function parseContainer(buffer: Buffer): ParsedContainer {
  if (buffer.length < 8) {
    throw new Error(`buffer of ${buffer.length} bytes cannot hold a header length`);
  }
  const headerLength = Number(buffer.readBigUInt64LE(0));
  if (8 + headerLength > buffer.length) {
    throw new Error(`header length ${headerLength} exceeds buffer`);
  }
  const header = JSON.parse(buffer.subarray(8, 8 + headerLength).toString('utf-8'));
  const metadata: Record<string, string> = header['__metadata__'] ?? {};
  delete header['__metadata__'];
  const base = 8 + headerLength;
  const tensors: TensorPayload[] = [];
  for (const [name, info] of Object.entries(header) as Array<[string, any]>) {
    const [begin, end] = info.data_offsets;
    tensors.push({
      name,
      shape: info.shape,
      dtype: info.dtype,
      data: buffer.subarray(base + begin, base + end),
    });
  }
  tensors.sort((a, b) => (a.name < b.name ? -1 : a.name > b.name ? 1 : 0));
  return { tensors, metadata };
}

function sortedObject<T extends Record<string, unknown>>(obj: T): T {
  return Object.fromEntries(Object.entries(obj).sort(([a], [b]) => (a < b ? -1 : 1))) as T;
}
