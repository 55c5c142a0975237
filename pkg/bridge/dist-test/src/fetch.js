/**
 * Retrieve candidate checkpoints by keyword, then convert them.
 *
 * Online mode queries a hub API (search endpoint + per-repo file listing +
 * file resolve downloads) and matches the keyword vocabulary against repo
 * ids, tags, and card text. Offline mode never touches the network: it
 * scans a local directory for files whose names match the vocabulary.
 */
import { mkdir, readdir, writeFile } from 'node:fs/promises';
import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { convert } from './convert.js';
import { NetworkUnavailable, NothingMatched } from './errors.js';
const WEIGHT_EXTENSIONS = ['.safetensors', '.pt', '.pth', '.bin', '.ckpt'];
const DEFAULT_API_BASE = 'https://huggingface.co';
export function loadKeywords(path) {
    const lines = readFileSync(path, 'utf-8').split('\n');
    return lines.map((line) => line.trim()).filter((line) => line.length > 0);
}
function normalize(text) {
    // split on separators and on letter/digit boundaries: "sentinel2" matches "Sentinel-2"
    return text
        .toLowerCase()
        .replace(/([a-z])(\d)/g, '$1 $2')
        .replace(/(\d)([a-z])/g, '$1 $2')
        .replace(/[^0-9a-z]+/g, ' ')
        .trim();
}
export function matchesVocabulary(text, keywords) {
    const haystack = ` ${normalize(text)} `;
    for (const keyword of keywords) {
        const needle = ` ${normalize(keyword)} `;
        if (haystack.includes(needle)) {
            return keyword;
        }
    }
    return null;
}
export async function fetchModels(options) {
    if (options.limit < 1) {
        throw new Error(`limit must be >= 1, got ${options.limit}`);
    }
    const keywords = loadKeywords(options.keywordsFile);
    await mkdir(options.outDir, { recursive: true });
    if (options.offline) {
        return fetchOffline(options, keywords);
    }
    return fetchOnline(options, keywords);
}
async function fetchOffline(options, keywords) {
    const localDir = options.localDir;
    if (!localDir) {
        throw new Error('offline mode needs --local-dir');
    }
    const report = { converted: [], skipped: [] };
    const files = (await readdir(localDir)).sort();
    let matched = 0;
    for (const file of files) {
        if (report.converted.length >= options.limit)
            break;
        if (!WEIGHT_EXTENSIONS.some((ext) => file.endsWith(ext)))
            continue;
        if (matchesVocabulary(file, keywords) === null)
            continue;
        matched += 1;
        const outPath = join(options.outDir, replaceExtension(file));
        try {
            report.converted.push(await convert(join(localDir, file), outPath));
        }
        catch (error) {
            report.skipped.push([file, error.message]);
        }
    }
    if (matched === 0) {
        throw new NothingMatched(`no file in ${localDir} matches the vocabulary`, report.skipped);
    }
    return report;
}
async function fetchOnline(options, keywords) {
    const base = (options.apiBase ?? DEFAULT_API_BASE).replace(/\/$/, '');
    const report = { converted: [], skipped: [] };
    const candidates = new Map();
    for (const keyword of keywords) {
        if (candidates.size >= options.limit * 4)
            break;
        const url = `${base}/api/models?search=${encodeURIComponent(keyword)}&limit=${options.limit}`;
        const models = (await getJson(url));
        for (const model of models) {
            const id = model.id ?? model.modelId;
            if (!id || candidates.has(id))
                continue;
            const card = model.cardData ? JSON.stringify(model.cardData) : '';
            const searchable = [id, ...(model.tags ?? []), card].join(' ');
            if (matchesVocabulary(searchable, keywords) !== null) {
                candidates.set(id, model);
            }
        }
    }
    if (candidates.size === 0) {
        throw new NothingMatched('no hub model matched the keyword vocabulary');
    }
    for (const [id, model] of candidates) {
        if (report.converted.length >= options.limit)
            break;
        try {
            const detail = model.siblings
                ? model
                : (await getJson(`${base}/api/models/${id}`));
            const weightFile = pickWeightFile(detail.siblings ?? []);
            if (!weightFile) {
                report.skipped.push([id, 'no weight file among siblings']);
                continue;
            }
            const response = await safeFetch(`${base}/${id}/resolve/main/${weightFile}`);
            if (!response.ok) {
                report.skipped.push([id, `download failed with status ${response.status}`]);
                continue;
            }
            const payload = Buffer.from(await response.arrayBuffer());
            const localName = `${id.replace(/\//g, '__')}__${weightFile.replace(/\//g, '__')}`;
            const downloadPath = join(options.outDir, localName);
            await writeFile(downloadPath, payload);
            const outPath = join(options.outDir, replaceExtension(localName));
            report.converted.push(await convert(downloadPath, outPath));
        }
        catch (error) {
            if (error instanceof NetworkUnavailable)
                throw error;
            report.skipped.push([id, error.message]);
        }
    }
    return report;
}
function pickWeightFile(siblings) {
    for (const extension of WEIGHT_EXTENSIONS) {
        const hit = siblings.find((s) => s.rfilename.endsWith(extension));
        if (hit)
            return hit.rfilename;
    }
    return null;
}
function replaceExtension(file) {
    const dot = file.lastIndexOf('.');
    const stem = dot > 0 ? file.slice(0, dot) : file;
    return `${stem}.wf.safetensors`;
}
async function safeFetch(url) {
    try {
        return await fetch(url);
    }
    catch (error) {
        throw new NetworkUnavailable(`cannot reach ${url}: ${error.message}`);
    }
}
async function getJson(url) {
    const response = await safeFetch(url);
    if (!response.ok) {
        throw new NetworkUnavailable(`${url} answered ${response.status}`);
    }
    return response.json();
}
//# sourceMappingURL=fetch.js.map