import json

import numpy as np
import pytest

from conftest import random_tensor_map
from weightfoundry.autoencoder import AutoencoderConfig, init_weights, save_weights
from weightfoundry.cli import run
from weightfoundry.container import load_checkpoint, save_checkpoint
from weightfoundry.mlp import init_classifier
from weightfoundry.zoo import dare_merge, magnitude_prune


@pytest.fixture
def model_dir(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(3):
        save_checkpoint(
            random_tensor_map(rng, source_id=f"m{i}", allow_empty=False),
            tmp_path / f"m{i}.safetensors",
        )
    return tmp_path


def test_collect_writes_manifest(model_dir, tmp_path):
    out = tmp_path / "manifest.json"
    assert run(["collect", "--in", str(model_dir), "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert isinstance(payload, list) and len(payload) == 3


def test_unknown_flag_usage_error(model_dir):
    with pytest.raises(SystemExit) as excinfo:
        run(["collect", "--in", str(model_dir), "--frobnicate"])
    assert excinfo.value.code == 2


def test_missing_subcommand_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        run([])
    assert excinfo.value.code == 2


def test_domain_error_exit_code(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run(["collect", "--in", str(empty), "--out", str(tmp_path / "m.json")]) == 1


def test_tokenize_round_trip(model_dir, tmp_path):
    out = tmp_path / "tokens.safetensors"
    assert run(["tokenize", "--in", str(model_dir / "m0.safetensors"),
                "--out", str(out), "--d-t", "8"]) == 0
    from weightfoundry.tokenizer import detokenize, load_token_sequence

    seq = load_token_sequence(out)
    assert seq.d_t == 8
    assert detokenize(seq) == load_checkpoint(model_dir / "m0.safetensors")


def test_merge_cli_matches_library(tmp_path):
    rng = np.random.default_rng(1)
    base = random_tensor_map(rng, source_id="base", allow_empty=False)
    donor = base.replace_values(
        {r.name: r.values + 0.5 for r in base}
    )
    save_checkpoint(base, tmp_path / "base.safetensors")
    save_checkpoint(donor, tmp_path / "donor.safetensors")
    out = tmp_path / "merged.safetensors"
    assert run(["merge", "--in", str(tmp_path / "base.safetensors"),
                "--donors", str(tmp_path / "donor.safetensors"),
                "--drop-p", "0.3", "--seed", "9", "--out", str(out)]) == 0
    expected = dare_merge(base, [donor], 0.3, 9)
    merged = load_checkpoint(out)
    for record in expected:
        assert np.array_equal(merged[record.name].values, record.values)


def test_prune_cli(tmp_path):
    tmap = init_classifier([2, 8, 3], seed=0, source_id="net")
    save_checkpoint(tmap, tmp_path / "net.safetensors")
    out = tmp_path / "pruned.safetensors"
    assert run(["prune", "--in", str(tmp_path / "net.safetensors"),
                "--sparsity", "0.5", "--out", str(out)]) == 0
    expected = magnitude_prune(tmap, 0.5)
    pruned = load_checkpoint(out)
    for record in expected:
        assert np.array_equal(pruned[record.name].values, record.values)


def test_prune_idempotent_bytes(tmp_path):
    tmap = init_classifier([2, 8, 3], seed=1, source_id="net")
    save_checkpoint(tmap, tmp_path / "net.safetensors")
    a, b = tmp_path / "a.safetensors", tmp_path / "b.safetensors"
    run(["prune", "--in", str(tmp_path / "net.safetensors"), "--sparsity", "0.4",
         "--out", str(a)])
    run(["prune", "--in", str(tmp_path / "net.safetensors"), "--sparsity", "0.4",
         "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


TINY = dict(d_t=4, latent_dim=8, proj_dim=4, num_layers_enc=1, num_layers_dec=1,
            num_heads=1, ff_dim=16, window=4, max_layer_index=7, max_k_index=15)


def _trained_weights_path(tmp_path):
    weights = init_weights(AutoencoderConfig(**TINY), seed=0)
    path = tmp_path / "ae.safetensors"
    save_weights(weights, path)
    return path


def test_generate_cli_writes_kept_candidates(tmp_path):
    prompt = init_classifier([2, 6, 3], seed=0, source_id="prompt0")
    save_checkpoint(prompt, tmp_path / "prompt0.safetensors")
    weights_path = _trained_weights_path(tmp_path)
    out_dir = tmp_path / "candidates"
    assert run(["generate", "--prompt", str(tmp_path / "prompt0.safetensors"),
                "--model", str(weights_path), "--count", "10", "--keep", "3",
                "--out", str(out_dir)]) == 0
    files = sorted(out_dir.glob("prompt0.gen*.safetensors"))
    assert len(files) == 3
    for path in files:
        candidate = load_checkpoint(path)
        assert candidate.shape_signature() == prompt.shape_signature()
        assert candidate.metadata["prompt_id"] == "prompt0"


def test_generate_cli_with_probe_ranks(tmp_path):
    prompt = init_classifier([2, 6, 3], seed=0, source_id="prompt0")
    save_checkpoint(prompt, tmp_path / "prompt0.safetensors")
    weights_path = _trained_weights_path(tmp_path)
    probe_path = tmp_path / "task.json"
    probe_path.write_text(json.dumps({"name": "probe-task", "num_classes": 3}))
    out_dir = tmp_path / "ranked"
    assert run(["generate", "--prompt", str(tmp_path / "prompt0.safetensors"),
                "--model", str(weights_path), "--count", "4", "--keep", "2",
                "--probe", str(probe_path), "--out", str(out_dir)]) == 0
    files = sorted(out_dir.glob("*.safetensors"))
    assert len(files) == 2
    scores = [float(load_checkpoint(f).metadata["probe_score"]) for f in files]
    assert all(np.isfinite(scores))


def test_config_file_with_flag_override(model_dir, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"d_t": 4}))
    out = tmp_path / "tokens.safetensors"
    assert run(["tokenize", "--in", str(model_dir / "m0.safetensors"),
                "--out", str(out), "--config", str(config)]) == 0
    from weightfoundry.tokenizer import load_token_sequence

    assert load_token_sequence(out).d_t == 4
    # explicit flag wins over the config value
    assert run(["tokenize", "--in", str(model_dir / "m0.safetensors"),
                "--out", str(out), "--config", str(config), "--d-t", "6"]) == 0
    assert load_token_sequence(out).d_t == 6


def test_config_unknown_key_rejected(model_dir, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"nonsense_key": 1}))
    with pytest.raises(SystemExit) as excinfo:
        run(["tokenize", "--in", str(model_dir / "m0.safetensors"),
             "--out", str(tmp_path / "t.safetensors"), "--config", str(config)])
    assert excinfo.value.code == 2


def test_wf_seed_env_fallback(tmp_path, monkeypatch):
    rng = np.random.default_rng(2)
    base = random_tensor_map(rng, source_id="base", allow_empty=False)
    donor = base.replace_values({r.name: r.values + 1.0 for r in base})
    save_checkpoint(base, tmp_path / "base.safetensors")
    save_checkpoint(donor, tmp_path / "donor.safetensors")
    monkeypatch.setenv("WF_SEED", "123")
    out = tmp_path / "m.safetensors"
    assert run(["merge", "--in", str(tmp_path / "base.safetensors"),
                "--donors", str(tmp_path / "donor.safetensors"),
                "--drop-p", "0.5", "--out", str(out)]) == 0
    expected = dare_merge(base, [donor], 0.5, 123)
    merged = load_checkpoint(out)
    for record in expected:
        assert np.array_equal(merged[record.name].values, record.values)


def test_evaluate_smoke(tmp_path):
    out = tmp_path / "report.json"
    code = run([
        "evaluate", "--out", str(out), "--work-dir", str(tmp_path / "work"),
        "--zoo-count", "4", "--num-tasks", "2", "--budget", "1",
        "--eval-seeds", "0", "--conditions", "scratch,generated",
        "--count", "3", "--keep", "1", "--epochs", "3", "--batch-size", "4",
        "--config", str(_small_eval_config(tmp_path)),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert set(payload["conditions"]) == {"scratch", "generated"}
    assert (tmp_path / "report.json.txt").exists()


def _small_eval_config(tmp_path):
    config = tmp_path / "eval-config.json"
    config.write_text(json.dumps({
        "zoo_epochs": 5, "num_classes": 3, "hidden_dim": 8,
        "latent_dim": 16, "proj_dim": 8, "num_layers_enc": 1, "num_layers_dec": 1,
        "num_heads": 2, "ff_dim": 32, "d_t": 8, "window": 8,
    }))
    return config


def test_train_init_warm_start(tmp_path):
    # build a small zoo + manifest, train, then continue from the weights
    from weightfoundry.zoo import ZooSpec, build_zoo, make_blob_tasks

    zoo_dir = tmp_path / "zoo"
    tasks = make_blob_tasks(1, num_classes=3, seed=0)
    build_zoo(ZooSpec(count=2, widths=(2, 6, 3), tasks=tuple(tasks), epochs=5, seed=0),
              out_dir=zoo_dir)
    manifest = tmp_path / "manifest.json"
    run(["collect", "--in", str(zoo_dir), "--out", str(manifest)])
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({
        "latent_dim": 16, "proj_dim": 8, "num_layers_enc": 1, "num_layers_dec": 1,
        "num_heads": 2, "ff_dim": 32, "max_layer_index": 15, "max_k_index": 31,
    }))
    first = tmp_path / "first.safetensors"
    assert run(["train", "--manifest", str(manifest), "--out", str(first),
                "--config", str(config), "--d-t", "8", "--window", "8",
                "--epochs", "2", "--batch-size", "2", "--seed", "0"]) == 0
    second = tmp_path / "second.safetensors"
    assert run(["train", "--manifest", str(manifest), "--out", str(second),
                "--config", str(config), "--d-t", "8", "--window", "8",
                "--epochs", "2", "--batch-size", "2", "--seed", "0",
                "--init", str(first)]) == 0
    from weightfoundry.autoencoder import load_weights

    assert load_weights(second) != load_weights(first)


def test_export_latents_cli(tmp_path):
    from weightfoundry.zoo import ZooSpec, build_zoo, make_blob_tasks

    zoo_dir = tmp_path / "zoo"
    tasks = make_blob_tasks(1, num_classes=3, seed=0)
    build_zoo(ZooSpec(count=2, widths=(2, 6, 3), tasks=tuple(tasks), epochs=5, seed=0),
              out_dir=zoo_dir)
    manifest = tmp_path / "manifest.json"
    run(["collect", "--in", str(zoo_dir), "--out", str(manifest)])
    weights_path = tmp_path / "ae.safetensors"
    from weightfoundry.autoencoder import AutoencoderConfig, init_weights, save_weights

    save_weights(init_weights(AutoencoderConfig(d_t=8, latent_dim=16, proj_dim=8,
                                                num_layers_enc=1, num_layers_dec=1,
                                                num_heads=2, ff_dim=32, window=8,
                                                max_layer_index=15, max_k_index=31), 0),
                 weights_path)
    out = tmp_path / "latents.csv"
    assert run(["export-latents", "--manifest", str(manifest),
                "--model", str(weights_path), "--out", str(out), "--seed", "3"]) == 0
    import csv

    with open(out) as handle:
        rows = list(csv.reader(handle))
    assert rows[0][-3:] == ["model_id", "family", "modality"]
    assert len(rows) > 1
    assert rows[1][-2] == "mlp"


def test_collect_idempotent_bytes(model_dir, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["collect", "--in", str(model_dir), "--out", str(a)]) == 0
    assert run(["collect", "--in", str(model_dir), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
