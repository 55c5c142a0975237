import numpy as np
import pytest

from conftest import random_tensor_map
from weightfoundry.collection import CollectionManifest, build_manifest
from weightfoundry.container import save_checkpoint, write_checkpoint
from weightfoundry.errors import AllInputsFailed


def _write_models(tmp_path, count):
    rng = np.random.default_rng(7)
    paths = []
    for i in range(count):
        tmap = random_tensor_map(rng, source_id=f"model{i:02d}")
        path = tmp_path / f"model{i:02d}.safetensors"
        save_checkpoint(tmap, path)
        paths.append((path, tmap))
    return paths


def test_manifest_over_valid_files(tmp_path):
    paths = _write_models(tmp_path, 3)
    manifest = build_manifest([p for p, _ in paths])
    assert len(manifest.entries) == 3
    for entry, (_, tmap) in zip(manifest.entries, paths):
        assert entry.parameter_count == sum(
            int(np.prod(r.shape)) for r in tmap
        )
    assert [e.source_id for e in manifest.entries] == sorted(
        e.source_id for e in manifest.entries
    )


def test_truncated_file_is_skipped(tmp_path):
    paths = [p for p, _ in _write_models(tmp_path, 2)]
    blob = write_checkpoint(random_tensor_map(np.random.default_rng(0)))
    bad = tmp_path / "broken.safetensors"
    bad.write_bytes(blob[: len(blob) // 2])
    manifest = build_manifest(paths + [bad])
    assert len(manifest.entries) == 2
    assert len(manifest.skipped) == 1
    assert "broken" in manifest.skipped[0][0]


def test_all_inputs_failed(tmp_path):
    with pytest.raises(AllInputsFailed):
        build_manifest([])
    bad = tmp_path / "junk.safetensors"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(AllInputsFailed):
        build_manifest([bad])


def test_manifest_json_round_trip(tmp_path):
    paths = [p for p, _ in _write_models(tmp_path, 2)]
    manifest = build_manifest(paths)
    restored = CollectionManifest.from_json(manifest.to_json())
    assert [e.source_id for e in restored.entries] == [e.source_id for e in manifest.entries]
    assert [e.parameter_count for e in restored.entries] == [
        e.parameter_count for e in manifest.entries
    ]
    assert restored.entries[0].inference.family == manifest.entries[0].inference.family
