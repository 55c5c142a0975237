import assert from 'node:assert/strict';
import { execFileSync, spawnSync } from 'node:child_process';
import { mkdtempSync, readFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { test } from 'node:test';

import { parseContainer } from '../src/container.js';

const FIXTURES = fileURLToPath(new URL('../../test/fixtures/', import.meta.url));
const CLI = fileURLToPath(new URL('../../dist/cli.js', import.meta.url));

test('convert subcommand writes a parseable container and a record', () => {
  const out = join(mkdtempSync(join(tmpdir(), 'wf-cli-')), 'out.safetensors');
  const stdout = execFileSync(process.execPath, [CLI, 'convert',
    join(FIXTURES, 'twolayer.pt'), out]).toString();
  const record = JSON.parse(stdout);
  assert.equal(record.tensorCount, 4);
  assert.equal(parseContainer(readFileSync(out)).tensors.length, 4);
});

test('usage errors exit 2', () => {
  const result = spawnSync(process.execPath, [CLI, 'convert', 'only-one-arg']);
  assert.equal(result.status, 2);
  const unknown = spawnSync(process.execPath, [CLI, 'frobnicate']);
  assert.equal(unknown.status, 2);
});

test('domain errors exit 1', () => {
  const out = join(mkdtempSync(join(tmpdir(), 'wf-cli-')), 'out.safetensors');
  const result = spawnSync(process.execPath, [CLI, 'convert',
    join(FIXTURES, 'corrupt.pt'), out]);
  assert.equal(result.status, 1);
  assert.match(result.stderr.toString(), /wf-export:/);
});
