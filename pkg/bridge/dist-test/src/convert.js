/**
 * Convert framework-native checkpoints into the weightfoundry container.
 *
 * Two source formats are recognized: checkpoint zip archives (a pickled
 * state dict plus raw storage files) and existing safetensors-style
 * containers with wider or narrower dtypes. Every floating tensor is
 * exported as little-endian F32; float32 sources survive bit for bit.
 * Tensor payloads are the only thing ever interpreted; no code object in
 * a pickle is executed.
 */
import { readFile, writeFile } from 'node:fs/promises';
import { writeContainer } from './container.js';
import { NoTensorsFound, UnreadableSource } from './errors.js';
import { bfloatToFloat, halfToFloat } from './halffloat.js';
import { Opaque, TensorStub, parsePickle } from './pickle.js';
import { ZipArchive } from './torchzip.js';
const FLOAT_DTYPES = {
    f32: { tag: 'f32', bytes: 4, read: (v, o) => v.getFloat32(o, true) },
    f64: { tag: 'f64', bytes: 8, read: (v, o) => v.getFloat64(o, true) },
    f16: { tag: 'f16', bytes: 2, read: (v, o) => halfToFloat(v.getUint16(o, true)) },
    bf16: { tag: 'bf16', bytes: 2, read: (v, o) => bfloatToFloat(v.getUint16(o, true)) },
};
const STORAGE_DTYPES = {
    FloatStorage: 'f32',
    DoubleStorage: 'f64',
    HalfStorage: 'f16',
    BFloat16Storage: 'bf16',
};
const SAFETENSORS_DTYPES = {
    F32: 'f32',
    F64: 'f64',
    F16: 'f16',
    BF16: 'bf16',
};
const SAFETENSORS_SIZES = {
    F64: 8, F32: 4, F16: 2, BF16: 2, I64: 8, I32: 4, I16: 2, I8: 1, U8: 1, BOOL: 1,
};
export async function convert(sourcePath, outPath) {
    let data;
    try {
        data = await readFile(sourcePath);
    }
    catch (error) {
        throw new UnreadableSource(`${sourcePath}: ${error.message}`);
    }
    let tensors;
    let metadata = {};
    const conversions = [];
    const warnings = [];
    if (ZipArchive.looksLikeZip(data)) {
        tensors = convertArchive(data, sourcePath, conversions, warnings);
    }
    else if (looksLikeContainer(data)) {
        ({ tensors, metadata } = convertContainer(data, sourcePath, conversions, warnings));
    }
    else {
        throw new UnreadableSource(`${sourcePath}: neither a checkpoint zip archive nor a tensor container`);
    }
    if (tensors.length === 0) {
        throw new NoTensorsFound(`${sourcePath}: no floating tensors survived conversion`);
    }
    await writeFile(outPath, writeContainer(tensors, metadata));
    return {
        source: sourcePath,
        output: outPath,
        tensorCount: tensors.length,
        dtypeConversions: conversions,
        warnings,
    };
}
// --- checkpoint zip archives -------------------------------------------------
function convertArchive(data, sourcePath, conversions, warnings) {
    const archive = new ZipArchive(data);
    const pickleEntry = archive.names().find((n) => n.endsWith('/data.pkl'));
    if (!pickleEntry) {
        throw new UnreadableSource(`${sourcePath}: archive holds no data.pkl`);
    }
    const prefix = pickleEntry.slice(0, -'/data.pkl'.length);
    const graph = parsePickle(archive.read(pickleEntry));
    const flattened = [];
    flatten(graph, '', flattened, warnings);
    const seen = new Set();
    const tensors = [];
    for (let [name, stub] of flattened) {
        if (seen.has(name)) {
            const unique = `${name}#${tensors.length}`;
            warnings.push(`duplicate tensor name ${name}; stored as ${unique}`);
            name = unique;
        }
        seen.add(name);
        const dtypeTag = STORAGE_DTYPES[stub.storage.storageType];
        if (!dtypeTag) {
            warnings.push(`dropped ${name}: non-floating storage ${stub.storage.storageType}`);
            continue;
        }
        const storageName = `${prefix}/data/${stub.storage.key}`;
        if (!archive.has(storageName)) {
            warnings.push(`dropped ${name}: missing storage ${storageName}`);
            continue;
        }
        const payload = gatherRowMajor(archive.read(storageName), stub, FLOAT_DTYPES[dtypeTag]);
        if (dtypeTag !== 'f32') {
            conversions.push(`${name}: ${dtypeTag} -> f32`);
        }
        tensors.push({ name, shape: stub.size, dtype: 'F32', data: payload });
    }
    return tensors;
}
function flatten(node, path, out, warnings) {
    if (node instanceof TensorStub) {
        out.push([path || 'tensor', node]);
        return;
    }
    if (node instanceof Map) {
        for (const [key, value] of node.entries()) {
            flatten(value, path ? `${path}.${String(key)}` : String(key), out, warnings);
        }
        return;
    }
    if (node instanceof Opaque) {
        warnings.push(`dropped ${path || '<root>'}: unsupported object ${node.constructorName}`);
        return;
    }
    if (path !== '') {
        const kind = node === null ? 'null' : Array.isArray(node) ? 'list' : typeof node;
        warnings.push(`dropped ${path}: non-tensor entry (${kind})`);
    }
}
/** Walk the tensor's size/stride and emit little-endian row-major f32 bytes. */
function gatherRowMajor(storage, stub, dtype) {
    const count = stub.size.reduce((a, b) => a * b, 1);
    const out = Buffer.alloc(count * 4);
    const view = new DataView(storage.buffer, storage.byteOffset, storage.byteLength);
    const rank = stub.size.length;
    const index = new Array(rank).fill(0);
    for (let flat = 0; flat < count; flat++) {
        let element = stub.storageOffset;
        for (let d = 0; d < rank; d++) {
            element += index[d] * stub.stride[d];
        }
        const byteOffset = element * dtype.bytes;
        if (byteOffset + dtype.bytes > view.byteLength) {
            throw new UnreadableSource(`storage ${stub.storage.key} too small for element ${element}`);
        }
        out.writeFloatLE(dtype.read(view, byteOffset), flat * 4);
        for (let d = rank - 1; d >= 0; d--) {
            index[d] += 1;
            if (index[d] < stub.size[d])
                break;
            index[d] = 0;
        }
    }
    return out;
}
// --- container sources (safetensors layout) ----------------------------------
function looksLikeContainer(data) {
    if (data.length < 9)
        return false;
    const headerLength = Number(data.readBigUInt64LE(0));
    return headerLength > 0 && 8 + headerLength <= data.length && data[8] === 0x7b; // '{'
}
function convertContainer(data, sourcePath, conversions, warnings) {
    const headerLength = Number(data.readBigUInt64LE(0));
    let header;
    try {
        header = JSON.parse(data.subarray(8, 8 + headerLength).toString('utf-8'));
    }
    catch (error) {
        throw new UnreadableSource(`${sourcePath}: bad container header: ${error.message}`);
    }
    const metadata = header['__metadata__'] ?? {};
    delete header['__metadata__'];
    const base = 8 + headerLength;
    const tensors = [];
    for (const [name, info] of Object.entries(header)) {
        const { dtype, shape, data_offsets: [begin, end] } = info;
        if (!(dtype in SAFETENSORS_SIZES)) {
            warnings.push(`dropped ${name}: unknown dtype ${dtype}`);
            continue;
        }
        const raw = data.subarray(base + begin, base + end);
        if (raw.length !== end - begin) {
            throw new UnreadableSource(`${sourcePath}: truncated data region for ${name}`);
        }
        const tag = SAFETENSORS_DTYPES[dtype];
        if (!tag) {
            warnings.push(`dropped ${name}: non-floating dtype ${dtype}`);
            continue;
        }
        if (tag === 'f32') {
            tensors.push({ name, shape, dtype: 'F32', data: Buffer.from(raw) });
            continue;
        }
        const source = FLOAT_DTYPES[tag];
        const count = (end - begin) / source.bytes;
        const out = Buffer.alloc(count * 4);
        const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
        for (let i = 0; i < count; i++) {
            out.writeFloatLE(source.read(view, i * source.bytes), i * 4);
        }
        conversions.push(`${name}: ${tag} -> f32`);
        tensors.push({ name, shape, dtype: 'F32', data: out });
    }
    return { tensors, metadata };
}
//# sourceMappingURL=convert.js.map