import assert from 'node:assert/strict';
import { test } from 'node:test';
import { parseContainer, writeContainer } from '../src/container.js';
function f32(values) {
    const out = Buffer.alloc(values.length * 4);
    values.forEach((v, i) => out.writeFloatLE(v, i * 4));
    return out;
}
test('round trip preserves payloads and metadata', () => {
    const tensors = [
        { name: 'b.weight', shape: [2, 2], dtype: 'F32', data: f32([1, 0, 0, 1]) },
        { name: 'a.bias', shape: [3], dtype: 'F32', data: f32([0.5, -0.5, 2]) },
    ];
    const blob = writeContainer(tensors, { source_id: 'demo' });
    const parsed = parseContainer(blob);
    assert.deepEqual(parsed.metadata, { source_id: 'demo' });
    assert.deepEqual(parsed.tensors.map((t) => t.name), ['a.bias', 'b.weight']);
    assert.ok(parsed.tensors[1].data.equals(tensors[0].data));
});
test('header layout: u64 length, JSON object, packed offsets', () => {
    const blob = writeContainer([
        { name: 'x', shape: [1], dtype: 'F32', data: f32([7]) },
        { name: 'y', shape: [2], dtype: 'F32', data: f32([8, 9]) },
    ]);
    const headerLength = Number(blob.readBigUInt64LE(0));
    const header = JSON.parse(blob.subarray(8, 8 + headerLength).toString('utf-8'));
    assert.deepEqual(header.x.data_offsets, [0, 4]);
    assert.deepEqual(header.y.data_offsets, [4, 12]);
    assert.equal(blob.length, 8 + headerLength + 12);
});
test('size mismatch is rejected', () => {
    assert.throws(() => writeContainer([{ name: 'x', shape: [3], dtype: 'F32', data: f32([1]) }]));
});
test('zero-length tensors survive', () => {
    const blob = writeContainer([
        { name: 'empty', shape: [0], dtype: 'F32', data: Buffer.alloc(0) },
    ]);
    const parsed = parseContainer(blob);
    assert.deepEqual(parsed.tensors[0].shape, [0]);
    assert.equal(parsed.tensors[0].data.length, 0);
});
//# sourceMappingURL=container.test.js.map