/** Bit-level half and bfloat16 to float32 widening. */
/** IEEE 754 binary16 -> number (exact float32 value). */
export function halfToFloat(bits) {
    const sign = (bits & 0x8000) ? -1 : 1;
    const exponent = (bits >> 10) & 0x1f;
    const mantissa = bits & 0x3ff;
    if (exponent === 0) {
        return sign * Math.pow(2, -14) * (mantissa / 1024);
    }
    if (exponent === 0x1f) {
        return mantissa === 0 ? sign * Infinity : NaN;
    }
    return sign * Math.pow(2, exponent - 15) * (1 + mantissa / 1024);
}
const BF16_SCRATCH = new DataView(new ArrayBuffer(4));
/** bfloat16 is float32 with the low 16 mantissa bits dropped. */
export function bfloatToFloat(bits) {
    BF16_SCRATCH.setUint32(0, (bits & 0xffff) << 16, false);
    return BF16_SCRATCH.getFloat32(0, false);
}
export function halfBufferToFloat32(data, count) {
    const out = new Float32Array(count);
    for (let i = 0; i < count; i++) {
        out[i] = halfToFloat(data.readUInt16LE(i * 2));
    }
    return out;
}
export function bfloatBufferToFloat32(data, count) {
    const out = new Float32Array(count);
    for (let i = 0; i < count; i++) {
        out[i] = bfloatToFloat(data.readUInt16LE(i * 2));
    }
    return out;
}
//# sourceMappingURL=halffloat.js.map