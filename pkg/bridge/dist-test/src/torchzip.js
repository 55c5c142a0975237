/**
 * Just enough ZIP reading for checkpoint archives: central directory walk,
 * stored and deflated entries. Data offsets come from each local header so
 * the alignment padding some writers put in the extra field is respected.
 */
import { inflateRawSync } from 'node:zlib';
import { UnreadableSource } from './errors.js';
const EOCD_SIGNATURE = 0x06054b50;
const CENTRAL_SIGNATURE = 0x02014b50;
const LOCAL_SIGNATURE = 0x04034b50;
export class ZipArchive {
    buffer;
    entries = new Map();
    constructor(buffer) {
        this.buffer = buffer;
        const eocd = this.findEndOfCentralDirectory();
        const count = buffer.readUInt16LE(eocd + 10);
        let cursor = buffer.readUInt32LE(eocd + 16);
        for (let i = 0; i < count; i++) {
            if (cursor + 46 > buffer.length || buffer.readUInt32LE(cursor) !== CENTRAL_SIGNATURE) {
                throw new UnreadableSource(`bad central directory record ${i}`);
            }
            const nameLength = buffer.readUInt16LE(cursor + 28);
            const extraLength = buffer.readUInt16LE(cursor + 30);
            const commentLength = buffer.readUInt16LE(cursor + 32);
            const entry = {
                name: buffer.subarray(cursor + 46, cursor + 46 + nameLength).toString('utf-8'),
                method: buffer.readUInt16LE(cursor + 10),
                compressedSize: buffer.readUInt32LE(cursor + 20),
                uncompressedSize: buffer.readUInt32LE(cursor + 24),
                localHeaderOffset: buffer.readUInt32LE(cursor + 42),
            };
            this.entries.set(entry.name, entry);
            cursor += 46 + nameLength + extraLength + commentLength;
        }
    }
    static looksLikeZip(buffer) {
        return buffer.length >= 4 && buffer.readUInt32LE(0) === LOCAL_SIGNATURE;
    }
    names() {
        return [...this.entries.keys()];
    }
    has(name) {
        return this.entries.has(name);
    }
    read(name) {
        const entry = this.entries.get(name);
        if (!entry) {
            throw new UnreadableSource(`archive has no entry ${name}`);
        }
        const { buffer } = this;
        const at = entry.localHeaderOffset;
        if (at + 30 > buffer.length || buffer.readUInt32LE(at) !== LOCAL_SIGNATURE) {
            throw new UnreadableSource(`bad local header for ${name}`);
        }
        const nameLength = buffer.readUInt16LE(at + 26);
        const extraLength = buffer.readUInt16LE(at + 28);
        const start = at + 30 + nameLength + extraLength;
        const raw = buffer.subarray(start, start + entry.compressedSize);
        if (raw.length !== entry.compressedSize) {
            throw new UnreadableSource(`truncated data for ${name}`);
        }
        if (entry.method === 0) {
            return raw;
        }
        if (entry.method === 8) {
            return inflateRawSync(raw);
        }
        throw new UnreadableSource(`unsupported compression method ${entry.method} for ${name}`);
    }
    findEndOfCentralDirectory() {
        const { buffer } = this;
        const lowest = Math.max(0, buffer.length - 65557);
        for (let i = buffer.length - 22; i >= lowest; i--) {
            if (buffer.readUInt32LE(i) === EOCD_SIGNATURE) {
                return i;
            }
        }
        throw new UnreadableSource('no end-of-central-directory record (not a zip archive)');
    }
}
//# sourceMappingURL=torchzip.js.map