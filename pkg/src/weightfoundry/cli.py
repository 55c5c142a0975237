"""Batch command-line front end: collect -> tokenize -> train -> generate ->
evaluate, plus the merge / prune baselines and latent export.

Options can come from a JSON config file (--config); explicit flags win.
The WF_SEED environment variable acts as a seed fallback. Exit codes:
0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import WeightFoundryError

logger = logging.getLogger("weightfoundry")

_MODEL_KEYS = ("d_t", "latent_dim", "proj_dim", "num_layers_enc", "num_layers_dec",
               "num_heads", "ff_dim", "window", "max_layer_index", "max_k_index")
_TRAIN_KEYS = ("epochs", "batch_size", "max_lr", "weight_decay", "gamma", "sigma_aug",
               "temperature", "seed", "pct_start", "div_factor", "final_div_factor")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with option defaults (flags win)")
    parser.add_argument("--seed", type=int, help="global seed (fallback: WF_SEED)")
    parser.add_argument("--log-level", default=None, help="logging level name")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wf", description="weight-space learning toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="build a manifest over checkpoint files")
    p.add_argument("--in", dest="in_dir", required=True, help="directory of checkpoints")
    p.add_argument("--out", required=True, help="manifest JSON path")
    _add_common(p)

    p = sub.add_parser("tokenize", help="tokenize one checkpoint")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--d-t", dest="d_t", type=int)
    _add_common(p)

    p = sub.add_parser("train", help="train the autoencoder on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="weights checkpoint path")
    p.add_argument("--init", help="warm-start weights (pretrain-then-finetune)")
    p.add_argument("--d-t", dest="d_t", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-lr", dest="max_lr", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma-aug", dest="sigma_aug", type=float)
    p.add_argument("--temperature", type=float)
    _add_common(p)

    p = sub.add_parser("generate", help="sample candidate models around a prompt")
    p.add_argument("--prompt", required=True)
    p.add_argument("--model", required=True, help="trained autoencoder weights")
    p.add_argument("--count", type=int)
    p.add_argument("--keep", type=int)
    p.add_argument("--bandwidth", default=None, help="scott or fixed:<h>")
    p.add_argument("--probe", help="toy task JSON used for zero-shot ranking")
    p.add_argument("--out", default=None, help="output directory for candidates")
    _add_common(p)

    p = sub.add_parser("evaluate", help="zoo comparison: scratch vs generated vs baselines")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--work-dir", dest="work_dir", required=True)
    p.add_argument("--model", help="reuse trained autoencoder weights")
    p.add_argument("--zoo-count", dest="zoo_count", type=int)
    p.add_argument("--num-tasks", dest="num_tasks", type=int)
    p.add_argument("--budget", type=int, help="fine-tune epochs per condition")
    p.add_argument("--eval-seeds", dest="eval_seeds", help="comma list, e.g. 0,1,2")
    p.add_argument("--conditions", help="comma list of conditions")
    p.add_argument("--count", type=int)
    p.add_argument("--keep", type=int)
    p.add_argument("--bandwidth", default=None)
    p.add_argument("--drop-p", dest="drop_p", type=float)
    p.add_argument("--sparsity", type=float)
    p.add_argument("--d-t", dest="d_t", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-lr", dest="max_lr", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma-aug", dest="sigma_aug", type=float)
    p.add_argument("--temperature", type=float)
    _add_common(p)

    p = sub.add_parser("export-latents", help="dump sampled token latents as CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("merge", help="DARE-merge donors into a base checkpoint")
    p.add_argument("--in", dest="in_path", required=True, help="base checkpoint")
    p.add_argument("--donors", required=True, help="comma list of donor checkpoints")
    p.add_argument("--drop-p", dest="drop_p", type=float)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("prune", help="global magnitude pruning")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--sparsity", type=float)
    p.add_argument("--out", required=True)
    _add_common(p)

    return parser


_DEFAULTS = {
    "collect": {},
    "tokenize": {"d_t": 16},
    "train": {"d_t": 16, "window": 16, "epochs": 200, "batch_size": 16, "max_lr": 1e-3,
              "gamma": 0.05, "sigma_aug": 0.05, "temperature": 0.1,
              "latent_dim": 32, "proj_dim": 16, "num_layers_enc": 2, "num_layers_dec": 2,
              "num_heads": 4, "ff_dim": 64, "max_layer_index": 31, "max_k_index": 63,
              "weight_decay": 3e-9, "pct_start": 0.3, "div_factor": 25.0,
              "final_div_factor": 1e4},
    "generate": {"count": 10, "keep": 3, "bandwidth": "scott", "out": "."},
    "evaluate": {"zoo_count": 10, "num_tasks": 2, "budget": 5, "eval_seeds": "0",
                 "conditions": "scratch,prompt,generated,dare,pruned",
                 "count": 10, "keep": 3, "bandwidth": "scott", "drop_p": 0.5,
                 "sparsity": 0.5, "d_t": 16, "window": 16, "epochs": 60,
                 "batch_size": 16, "max_lr": 1e-3, "gamma": 0.05, "sigma_aug": 0.05,
                 "temperature": 0.1,
                 "latent_dim": 32, "proj_dim": 16, "num_layers_enc": 2,
                 "num_layers_dec": 2, "num_heads": 4, "ff_dim": 64,
                 "max_layer_index": 31, "max_k_index": 63,
                 "weight_decay": 3e-9, "pct_start": 0.3, "div_factor": 25.0,
                 "final_div_factor": 1e4, "zoo_epochs": 80, "finetune_lr": 0.02,
                 "num_classes": 6, "spread": 0.85, "radius": 2.0,
                 "task_train_size": 48, "hidden_dim": 16},
    "export-latents": {},
    "merge": {"drop_p": 0.5},
    "prune": {"sparsity": 0.5},
}


def _effective_options(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    """defaults < config file < explicit flags; unknown config keys rejected."""
    options = dict(_DEFAULTS[args.command])
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"--config: {exc}")
        if not isinstance(loaded, dict):
            parser.error("--config must hold a JSON object")
        unknown = set(loaded) - set(options) - set(vars(args))
        if unknown:
            parser.error(f"--config: unknown keys {sorted(unknown)}")
        options.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        options[key] = value
    if options.get("seed") is None:
        options["seed"] = int(os.environ.get("WF_SEED", "0"))
    return options


def _load_sequences_from_manifest(manifest_path: str, d_t: int):
    from .collection import CollectionManifest
    from .container import load_checkpoint
    from .tokenizer import tokenize_model

    manifest = CollectionManifest.from_json(Path(manifest_path).read_text())
    return manifest, [
        tokenize_model(load_checkpoint(e.path), d_t) for e in manifest.entries
    ]


def _cmd_collect(opts: dict) -> int:
    from .collection import build_manifest

    paths = sorted(p for p in Path(opts["in_dir"]).iterdir() if p.is_file()
                   and not p.name.endswith(".json"))
    manifest = build_manifest(paths)
    Path(opts["out"]).write_text(manifest.to_json())
    for path, reason in manifest.skipped:
        logger.warning("skipped %s: %s", path, reason)
    logger.info("manifest with %d entries -> %s", len(manifest.entries), opts["out"])
    return 0


def _cmd_tokenize(opts: dict) -> int:
    from .container import load_checkpoint
    from .tokenizer import save_token_sequence, tokenize_model

    seq = tokenize_model(load_checkpoint(opts["in_path"]), opts["d_t"])
    save_token_sequence(seq, opts["out"])
    logger.info("%d tokens (d_t=%d) -> %s", len(seq), seq.d_t, opts["out"])
    return 0


def _estimator_from_options(opts: dict):
    from .estimators import SequenceAutoencoder

    return SequenceAutoencoder(
        **{k: opts[k] for k in _MODEL_KEYS},
        **{k: opts[k] for k in _TRAIN_KEYS},
        checkpoint_path=opts.get("checkpoint_path"),
    )


def _cmd_train(opts: dict) -> int:
    from .autoencoder import load_weights, save_weights

    _, sequences = _load_sequences_from_manifest(opts["manifest"], opts["d_t"])
    estimator = _estimator_from_options(opts)
    init = load_weights(opts["init"]) if opts.get("init") else None
    estimator.fit(sequences, init=init)
    save_weights(estimator.weights_, opts["out"])
    estimator.history_.save(str(opts["out"]) + ".history.jsonl")
    last = estimator.history_.records[-1]
    logger.info("trained %d epochs; final val loss %.6f -> %s",
                len(estimator.history_.records), last.val_loss, opts["out"])
    return 0


def _cmd_generate(opts: dict) -> int:
    from .autoencoder import load_weights
    from .container import load_checkpoint
    from .generation import ProbeSet, generate, rank_candidates, save_candidate
    from .zoo import ToyTask

    prompt = load_checkpoint(opts["prompt"])
    weights = load_weights(opts["model"])
    count, keep = opts["count"], opts["keep"]
    if keep > count:
        raise WeightFoundryError(f"--keep {keep} exceeds --count {count}")
    seeds = [opts["seed"] + i for i in range(count)]
    candidates = generate(prompt, weights, count, seeds=seeds,
                          bandwidth_rule=opts["bandwidth"])
    if opts.get("probe"):
        task = ToyTask(**json.loads(Path(opts["probe"]).read_text()))
        data = task.data()
        kept = rank_candidates(candidates, ProbeSet(data["X_probe"], data["y_probe"]), keep)
    else:
        logger.warning("no --probe given; keeping the first %d candidates by seed", keep)
        kept = candidates[:keep]
    for candidate in kept:
        path = save_candidate(candidate, opts["out"])
        print(path)
    return 0


def _cmd_evaluate(opts: dict) -> int:
    from .autoencoder import load_weights, save_weights
    from .zoo import ZooSpec, build_zoo, make_blob_tasks, run_comparison
    from .tokenizer import tokenize_model

    work_dir = Path(opts["work_dir"])
    work_dir.mkdir(parents=True, exist_ok=True)
    tasks = make_blob_tasks(
        opts["num_tasks"], num_classes=opts["num_classes"], seed=opts["seed"],
        spread=opts["spread"], radius=opts["radius"],
        train_size=opts["task_train_size"], val_size=32, probe_size=32, test_size=300,
    )
    widths = (2, opts["hidden_dim"], opts["num_classes"])
    spec = ZooSpec(count=opts["zoo_count"], widths=widths, tasks=tuple(tasks),
                   epochs=opts["zoo_epochs"], seed=opts["seed"])
    zoo = build_zoo(spec, work_dir / "zoo")
    if opts.get("model"):
        weights = load_weights(opts["model"])
    else:
        sequences = [tokenize_model(m.weights, opts["d_t"]) for m in zoo]
        estimator = _estimator_from_options(opts)
        estimator.fit(sequences)
        weights = estimator.weights_
        save_weights(weights, work_dir / "autoencoder.safetensors")
        estimator.history_.save(work_dir / "autoencoder.history.jsonl")
    seeds = [int(s) for s in str(opts["eval_seeds"]).split(",") if s != ""]
    conditions = [c for c in opts["conditions"].split(",") if c]
    report = run_comparison(
        zoo, weights, tasks, conditions, opts["budget"], seeds,
        count=opts["count"], keep=opts["keep"], bandwidth_rule=opts["bandwidth"],
        drop_p=opts["drop_p"], sparsity=opts["sparsity"],
        finetune_lr=opts["finetune_lr"],
    )
    Path(opts["out"]).write_text(report.to_json())
    Path(str(opts["out"]) + ".txt").write_text(report.render_text() + "\n")
    print(report.render_text())
    return 0


def _cmd_export_latents(opts: dict) -> int:
    from .autoencoder import load_weights
    from .container import load_checkpoint
    from .generation import embed_prompt
    from .zoo import export_latents

    manifest, _ = _load_sequences_from_manifest(opts["manifest"], 1)
    weights = load_weights(opts["model"])
    labeled = []
    for entry in manifest.entries:
        emb = embed_prompt(load_checkpoint(entry.path), weights)
        labeled.append((emb, entry.inference.family, entry.inference.modality_hint))
    rows = export_latents(labeled, opts["out"], seed=opts["seed"])
    logger.info("%d latent rows -> %s", rows, opts["out"])
    return 0


def _cmd_merge(opts: dict) -> int:
    from .container import load_checkpoint, save_checkpoint
    from .zoo import dare_merge

    base = load_checkpoint(opts["in_path"])
    donors = [load_checkpoint(p) for p in opts["donors"].split(",") if p]
    merged = dare_merge(base, donors, opts["drop_p"], opts["seed"])
    save_checkpoint(merged, opts["out"])
    logger.info("merged %d donors (drop_p=%.2f) -> %s", len(donors), opts["drop_p"], opts["out"])
    return 0


def _cmd_prune(opts: dict) -> int:
    from .container import load_checkpoint, save_checkpoint
    from .zoo import magnitude_prune

    pruned = magnitude_prune(load_checkpoint(opts["in_path"]), opts["sparsity"])
    save_checkpoint(pruned, opts["out"])
    logger.info("pruned at sparsity %.2f -> %s", opts["sparsity"], opts["out"])
    return 0


_COMMANDS = {
    "collect": _cmd_collect,
    "tokenize": _cmd_tokenize,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "export-latents": _cmd_export_latents,
    "merge": _cmd_merge,
    "prune": _cmd_prune,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    options = _effective_options(args, parser)
    logging.basicConfig(
        level=getattr(logging, (options.get("log_level") or "INFO").upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](options)
    except WeightFoundryError as exc:
        logger.error("%s", exc)
        return 1
    except OSError as exc:
        logger.error("%s", exc)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
