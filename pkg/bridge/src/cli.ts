#!/usr/bin/env node
/**
 * wf-export: bridge framework checkpoints into the weightfoundry container.
 *
 *   wf-export convert <in> <out>
 *   wf-export fetch --keywords-file <vocab> --limit N --out-dir D
 *            [--api-base URL] [--offline --local-dir DIR]
 *
 * Exit codes: 0 success, 1 domain error, 2 usage error.
 */
import { convert } from './convert.js';
import { NetworkUnavailable, NoTensorsFound, NothingMatched, UnreadableSource } from './errors.js';
import { fetchModels } from './fetch.js';

const USAGE = `usage:
  wf-export convert <in> <out>
  wf-export fetch --keywords-file <vocab> --limit N --out-dir D [--api-base URL] [--offline --local-dir DIR]`;

function usageError(message: string): never {
  console.error(`wf-export: ${message}\n${USAGE}`);
  process.exit(2);
}

async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  if (command === 'convert') {
    if (rest.length !== 2) {
      usageError('convert takes exactly <in> and <out>');
    }
    const record = await convert(rest[0], rest[1]);
    console.log(JSON.stringify(record, null, 2));
    return 0;
  }
  if (command === 'fetch') {
    const options: Record<string, string | boolean> = {};
    for (let i = 0; i < rest.length; i++) {
      switch (rest[i]) {
        case '--keywords-file':
          options.keywordsFile = rest[++i];
          break;
        case '--limit':
          options.limit = rest[++i];
          break;
        case '--out-dir':
          options.outDir = rest[++i];
          break;
        case '--api-base':
          options.apiBase = rest[++i];
          break;
        case '--offline':
          options.offline = true;
          break;
        case '--local-dir':
          options.localDir = rest[++i];
          break;
        default:
          usageError(`unknown flag ${rest[i]}`);
      }
    }
    if (!options.keywordsFile || !options.outDir || !options.limit) {
      usageError('fetch needs --keywords-file, --limit and --out-dir');
    }
    const report = await fetchModels({
      keywordsFile: String(options.keywordsFile),
      limit: Number(options.limit),
      outDir: String(options.outDir),
      apiBase: options.apiBase ? String(options.apiBase) : undefined,
      offline: Boolean(options.offline),
      localDir: options.localDir ? String(options.localDir) : undefined,
    });
    console.log(JSON.stringify(report, null, 2));
    if (report.converted.length === 0) {
      console.error('wf-export: every matched file failed to convert');
      return 1;
    }
    return 0;
  }
  usageError(command ? `unknown command ${command}` : 'missing command');
}

main(process.argv.slice(2))
  .then((code) => process.exit(code))
  .catch((error) => {
    if (
      error instanceof UnreadableSource ||
      error instanceof NoTensorsFound ||
      error instanceof NetworkUnavailable ||
      error instanceof NothingMatched
    ) {
      console.error(`wf-export: ${error.message}`);
      if (error instanceof NothingMatched && error.reasons.length > 0) {
        for (const [name, reason] of error.reasons) {
          console.error(`  ${name}: ${reason}`);
        }
      }
      process.exit(1);
    }
    console.error(error);
    process.exit(1);
  });
