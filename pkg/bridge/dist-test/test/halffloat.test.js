import assert from 'node:assert/strict';
import { test } from 'node:test';
import { bfloatToFloat, halfToFloat } from '../src/halffloat.js';
test('half precision bit patterns', () => {
    assert.equal(halfToFloat(0x3c00), 1.0);
    assert.equal(halfToFloat(0xc100), -2.5);
    assert.equal(halfToFloat(0x0000), 0.0);
    assert.equal(halfToFloat(0x7bff), 65504.0); // largest normal
    assert.equal(halfToFloat(0x0400), 6.103515625e-5); // smallest normal
    assert.equal(halfToFloat(0x0001), 5.960464477539063e-8); // smallest subnormal
    assert.equal(halfToFloat(0x7c00), Infinity);
    assert.equal(halfToFloat(0xfc00), -Infinity);
    assert.ok(Number.isNaN(halfToFloat(0x7e00)));
});
test('bfloat16 bit patterns', () => {
    assert.equal(bfloatToFloat(0x3f80), 1.0);
    assert.equal(bfloatToFloat(0x4040), 3.0);
    assert.equal(bfloatToFloat(0xbf00), -0.5);
    assert.equal(bfloatToFloat(0x7f80), Infinity);
    assert.ok(Number.isNaN(bfloatToFloat(0x7fc0)));
});
//# sourceMappingURL=halffloat.test.js.map