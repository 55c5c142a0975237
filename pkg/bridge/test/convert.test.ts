import assert from 'node:assert/strict';
import { readFileSync } from 'node:fs';
import { mkdtempSync, readFileSync as read } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { test } from 'node:test';

import { parseContainer } from '../src/container.js';
import { convert } from '../src/convert.js';
import { NoTensorsFound, UnreadableSource } from '../src/errors.js';

const FIXTURES = fileURLToPath(new URL('../../test/fixtures/', import.meta.url));
const EXPECTED = JSON.parse(readFileSync(join(FIXTURES, 'expected.json'), 'utf-8')) as Record<
  string,
  { tensors: Record<string, { shape: number[]; values: number[] }> }
>;

function workDir(): string {
  return mkdtempSync(join(tmpdir(), 'wf-export-'));
}

function expectedBytes(values: number[]): Buffer {
  const out = Buffer.alloc(values.length * 4);
  values.forEach((v, i) => out.writeFloatLE(v, i * 4));
  return out;
}

for (const [fixture, spec] of Object.entries(EXPECTED)) {
  if (Object.keys(spec.tensors).length === 0) continue; // error cases tested separately
  test(`convert ${fixture} reproduces the expected f32 payloads exactly`, async () => {
    const out = join(workDir(), 'out.safetensors');
    const record = await convert(join(FIXTURES, fixture), out);
    const parsed = parseContainer(read(out));
    const byName = new Map(parsed.tensors.map((t) => [t.name, t]));
    assert.equal(record.tensorCount, Object.keys(spec.tensors).length);
    assert.equal(parsed.tensors.length, Object.keys(spec.tensors).length);
    for (const [name, tensor] of Object.entries(spec.tensors)) {
      const got = byName.get(name);
      assert.ok(got, `missing tensor ${name}`);
      assert.deepEqual(got.shape, tensor.shape);
      assert.equal(got.dtype, 'F32');
      assert.ok(got.data.equals(expectedBytes(tensor.values)), `${name} bytes differ`);
    }
  });
}

test('flat f32 archives convert without dtype conversions or warnings', async () => {
  const out = join(workDir(), 'out.safetensors');
  const record = await convert(join(FIXTURES, 'fixture00.pt'), out);
  assert.deepEqual(record.dtypeConversions, []);
  assert.deepEqual(record.warnings, []);
});

test('two-layer perceptron yields exactly 4 tensors', async () => {
  const out = join(workDir(), 'out.safetensors');
  const record = await convert(join(FIXTURES, 'twolayer.pt'), out);
  assert.equal(record.tensorCount, 4);
});

test('mixed checkpoint records conversions and dropped entries', async () => {
  const out = join(workDir(), 'out.safetensors');
  const record = await convert(join(FIXTURES, 'special.pt'), out);
  const conversions = record.dtypeConversions.join('\n');
  assert.match(conversions, /state_dict\.half: f16 -> f32/);
  assert.match(conversions, /state_dict\.brain: bf16 -> f32/);
  assert.match(conversions, /state_dict\.double: f64 -> f32/);
  const warnings = record.warnings.join('\n');
  assert.match(warnings, /state_dict\.ids: non-floating storage LongStorage/);
  assert.match(warnings, /epoch: non-tensor entry \(number\)/);
  assert.match(warnings, /nothing: non-tensor entry \(null\)/);
  assert.match(warnings, /history: non-tensor entry \(list\)/);
});

test('non-contiguous views are materialized row-major', async () => {
  const out = join(workDir(), 'out.safetensors');
  await convert(join(FIXTURES, 'special.pt'), out);
  const parsed = parseContainer(read(out));
  const transposed = parsed.tensors.find((t) => t.name === 'state_dict.transposed');
  assert.ok(transposed);
  assert.deepEqual(transposed.shape, [4, 3]);
  const values = [];
  for (let i = 0; i < 12; i++) values.push(transposed.data.readFloatLE(i * 4));
  assert.deepEqual(values, [0, 4, 8, 1, 5, 9, 2, 6, 10, 3, 7, 11]);
});

test('container sources: f64 downcast, f16 widened, integers dropped', async () => {
  const out = join(workDir(), 'out.safetensors');
  const f64Record = await convert(join(FIXTURES, 'container_f64.safetensors'), out);
  assert.deepEqual(f64Record.dtypeConversions, ['w: f64 -> f32']);
  const f16Record = await convert(join(FIXTURES, 'container_f16.safetensors'), out);
  assert.deepEqual(f16Record.dtypeConversions, ['h: f16 -> f32']);
  assert.match(f16Record.warnings.join('\n'), /ids: non-floating dtype I64/);
});

test('corrupted archive raises UnreadableSource', async () => {
  await assert.rejects(
    convert(join(FIXTURES, 'corrupt.pt'), join(workDir(), 'out.safetensors')),
    UnreadableSource,
  );
});

test('tensor-free checkpoint raises NoTensorsFound', async () => {
  await assert.rejects(
    convert(join(FIXTURES, 'notensors.pt'), join(workDir(), 'out.safetensors')),
    NoTensorsFound,
  );
});

test('missing source raises UnreadableSource', async () => {
  await assert.rejects(
    convert(join(FIXTURES, 'does-not-exist.pt'), join(workDir(), 'out.safetensors')),
    UnreadableSource,
  );
});
