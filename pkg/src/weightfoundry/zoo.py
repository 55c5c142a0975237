"""Desk-scale evaluation: toy model zoos, fine-tuning comparisons, and the
merge / prune baseline operations.

Tasks are synthetic 2-D classification problems (Gaussian blobs or two
moons) so the whole pipeline runs in minutes on a CPU. Zoo members are
small ReLU classifiers trained to convergence and persisted through the
checkpoint container like any other model.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import TensorMap, save_checkpoint
from .errors import EmptyInput, ShapeMismatch, TaskDegenerate
from .generation import PromptEmbedding
from .mlp import classifier_widths, evaluate, init_classifier, train_classifier
from .seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ToyTask:
    """Synthetic classification task, regenerated deterministically from seed."""

    name: str
    input_dim: int = 2
    num_classes: int = 4
    kind: str = "blobs"          # "blobs" or "moons"
    angle: float = 0.0           # blob ring rotation, radians
    radius: float = 2.0          # blob ring radius
    spread: float = 0.6          # blob standard deviation
    noise: float = 0.15          # moons jitter
    train_size: int = 96
    val_size: int = 48
    probe_size: int = 32
    test_size: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("blobs", "moons"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == "moons" and self.num_classes != 2:
            raise TaskDegenerate("moons tasks are binary")
        if self.kind == "blobs" and (self.radius <= 0 or self.spread <= 0):
            raise TaskDegenerate("blob centers coincide or have no spread")
        if self.num_classes < 2 or self.input_dim < 2:
            raise TaskDegenerate("need at least two classes and two dimensions")

    def data(self) -> dict[str, np.ndarray]:
        """Disjoint train/val/probe/test splits, deterministic from seed."""
        rng = np.random.default_rng(derive_seed(self.seed, "task", self.name))
        splits = {}
        for split, size in (
            ("train", self.train_size),
            ("val", self.val_size),
            ("probe", self.probe_size),
            ("test", self.test_size),
        ):
            features, labels = self._sample(rng, size)
            splits[f"X_{split}"] = features
            splits[f"y_{split}"] = labels
        return splits

    def _sample(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        labels = np.arange(size) % self.num_classes
        labels = rng.permutation(labels)
        features = np.zeros((size, self.input_dim))
        if self.kind == "blobs":
            angles = self.angle + 2.0 * np.pi * labels / self.num_classes
            centers = np.zeros((size, self.input_dim))
            centers[:, 0] = self.radius * np.cos(angles)
            centers[:, 1] = self.radius * np.sin(angles)
            features = centers + rng.normal(0.0, self.spread, size=(size, self.input_dim))
        else:
            t = rng.uniform(0.0, np.pi, size=size)
            features[:, 0] = np.where(labels == 0, np.cos(t), 1.0 - np.cos(t))
            features[:, 1] = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t))
            features[:, :2] += rng.normal(0.0, self.noise, size=(size, 2))
        return features, labels


def make_blob_tasks(
    count: int,
    num_classes: int = 4,
    seed: int = 0,
    spread: float | None = None,
    radius: float | None = None,
    train_size: int = 96,
    val_size: int = 48,
    probe_size: int = 32,
    test_size: int = 200,
) -> list[ToyTask]:
    """A family of blob tasks with rotated class geometry per task.

    By default radius and spread vary slightly between tasks; passing
    explicit values fixes the difficulty across the family.
    """
    tasks = []
    for i in range(count):
        tasks.append(
            ToyTask(
                name=f"blobs{i}",
                num_classes=num_classes,
                angle=np.pi * i / max(count, 1),
                radius=radius if radius is not None else 2.0 + 0.25 * (i % 3),
                spread=spread if spread is not None else 0.55 + 0.05 * (i % 2),
                train_size=train_size,
                val_size=val_size,
                probe_size=probe_size,
                test_size=test_size,
                seed=derive_seed(seed, "blob-task", i),
            )
        )
    return tasks


@dataclass(frozen=True)
class ZooSpec:
    count: int = 50
    widths: tuple[int, ...] = (2, 16, 4)
    tasks: tuple[ToyTask, ...] = ()
    epochs: int = 60
    lr: float = 0.02
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("contrastive training needs a zoo of at least 2 models")
        if not self.tasks:
            raise ValueError("zoo needs at least one task")
        for task in self.tasks:
            if task.input_dim != self.widths[0] or task.num_classes != self.widths[-1]:
                raise ShapeMismatch(
                    f"task {task.name} ({task.input_dim}->{task.num_classes}) does not "
                    f"fit template {self.widths}"
                )


@dataclass
class ZooMember:
    weights: TensorMap
    task: ToyTask
    final_metric: float


def build_zoo(spec: ZooSpec, out_dir: str | Path | None = None) -> list[ZooMember]:
    """Train spec.count classifiers across the task list; deterministic."""
    members = []
    for i in range(spec.count):
        task = spec.tasks[i % len(spec.tasks)]
        data = task.data()
        member_seed = derive_seed(spec.seed, "zoo-member", i)
        source_id = f"zoo{i:03d}.{task.name}"
        init = init_classifier(list(spec.widths), member_seed, source_id=source_id)
        trained, _ = train_classifier(
            init, data["X_train"], data["y_train"], epochs=spec.epochs,
            lr=spec.lr, batch_size=spec.batch_size, seed=member_seed,
        )
        _, accuracy = evaluate(trained, data["X_test"], data["y_test"])
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            trained.metadata = {"task": task.name, "family": "mlp"}
            save_checkpoint(trained, out_dir / f"{source_id}.safetensors")
        members.append(ZooMember(trained, task, accuracy))
    return members


@dataclass
class FinetuneResult:
    val_trajectory: list[float]
    test_accuracy: float
    test_loss: float


def finetune(
    init: TensorMap,
    task: ToyTask,
    epochs: int,
    seed: int,
    lr: float = 0.02,
    batch_size: int = 32,
    reinit_head: bool = False,
) -> FinetuneResult:
    """Supervised training from the given weights under a fixed budget.

    epochs=0 reports the zero-shot metric of the initialization itself.
    """
    widths = classifier_widths(init)
    if widths[-1] != task.num_classes or widths[0] != task.input_dim:
        if not reinit_head:
            raise ShapeMismatch(
                f"init is {widths[0]}->{widths[-1]}, task needs "
                f"{task.input_dim}->{task.num_classes} (pass reinit_head=True)"
            )
        fresh = init_classifier(widths[:-1] + [task.num_classes], derive_seed(seed, "head"))
        head = len(widths) - 2
        head_names = {f"layers.{head}.weight", f"layers.{head}.bias"}
        records = [r for r in init if r.name not in head_names]
        records += [fresh[name] for name in sorted(head_names)]
        init = TensorMap(records, source_id=init.source_id, metadata=dict(init.metadata))
    data = task.data()
    if epochs == 0:
        loss, accuracy = evaluate(init, data["X_test"], data["y_test"])
        return FinetuneResult([], accuracy, loss)
    trained, trajectory = train_classifier(
        init, data["X_train"], data["y_train"], epochs=epochs, lr=lr,
        batch_size=batch_size, seed=seed, val_data=(data["X_val"], data["y_val"]),
    )
    loss, accuracy = evaluate(trained, data["X_test"], data["y_test"])
    return FinetuneResult(trajectory, accuracy, loss)


def dare_merge(base: TensorMap, donors: list[TensorMap], drop_p: float, seed: int) -> TensorMap:
    """Drop-and-rescale merge: sparsify each donor delta, rescale survivors
    by 1/(1-drop_p), add the donor mean back onto the base."""
    if not 0.0 <= drop_p < 1.0:
        raise ValueError(f"drop_p must be in [0, 1), got {drop_p}")
    if not donors:
        raise EmptyInput("need at least one donor")
    signature = base.shape_signature()
    for donor in donors:
        if donor.shape_signature() != signature:
            raise ShapeMismatch(f"donor {donor.source_id!r} shapes differ from base")
    rng = np.random.default_rng(seed)
    merged = {}
    for record in base:
        acc = np.zeros_like(record.values)
        for donor in donors:
            delta = donor[record.name].values - record.values
            keep = (rng.random(delta.shape) >= drop_p).astype(delta.dtype)
            acc = acc + keep * delta / (1.0 - drop_p)
        merged[record.name] = record.values + acc / len(donors)
    out = base.replace_values(merged)
    out.source_id = f"{base.source_id}.dare" if base.source_id else "dare"
    return out


def magnitude_prune(weights: TensorMap, sparsity: float) -> TensorMap:
    """Zero the floor(sparsity * N) globally smallest-magnitude entries.

    Ties break by canonical order: earlier entries are pruned first.
    """
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must be in [0, 1), got {sparsity}")
    flat = np.concatenate([r.values.astype(np.float64) for r in weights]) if len(weights) else \
        np.zeros(0)
    kill = int(math.floor(sparsity * flat.size))
    doomed = np.argsort(np.abs(flat), kind="stable")[:kill]
    alive = np.ones(flat.size, dtype=bool)
    alive[doomed] = False
    pruned = {}
    cursor = 0
    for record in weights:
        keep = alive[cursor : cursor + record.values.size]
        pruned[record.name] = record.values * keep.astype(record.values.dtype)
        cursor += record.values.size
    out = weights.replace_values(pruned)
    out.source_id = f"{weights.source_id}.pruned" if weights.source_id else "pruned"
    return out


CONDITIONS = ("scratch", "prompt", "generated", "dare", "pruned")


@dataclass
class EvalReport:
    """Per-condition metric tables; every mean carries its per-seed values."""

    conditions: dict[str, dict[str, dict]] = field(default_factory=dict)
    curves: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    budget: int = 0

    def record(self, condition: str, task: str, seed: int, values: list[float],
               trajectory: list[float] | None = None) -> None:
        cell = self.conditions.setdefault(condition, {}).setdefault(
            task, {"per_seed": {}, "values": []}
        )
        cell["per_seed"][str(seed)] = values
        cell["values"].extend(values)
        if trajectory:
            self.curves.setdefault(condition, {}).setdefault(task, []).append(trajectory)

    def finalize(self) -> None:
        for tasks in self.conditions.values():
            for cell in tasks.values():
                cell["mean"] = float(np.mean(cell["values"]))
                cell["std"] = float(np.std(cell["values"]))
        for condition, tasks in self.curves.items():
            for task, trajectories in tasks.items():
                tasks[task] = np.mean(np.asarray(trajectories), axis=0).tolist()

    def task_mean(self, condition: str, task: str) -> float:
        return self.conditions[condition][task]["mean"]

    def to_json(self) -> str:
        return json.dumps(
            {"seeds": self.seeds, "budget": self.budget,
             "conditions": self.conditions, "curves": self.curves},
            indent=2, sort_keys=True,
        )

    def render_text(self) -> str:
        tasks = sorted({t for cells in self.conditions.values() for t in cells})
        names = [c for c in CONDITIONS if c in self.conditions]
        names += [c for c in self.conditions if c not in names]
        width = max(len(t) for t in tasks) + 2
        lines = ["".ljust(width) + "".join(c.ljust(18) for c in names)]
        for task in tasks:
            row = task.ljust(width)
            for condition in names:
                cell = self.conditions[condition].get(task)
                row += (f"{cell['mean']:.3f} ±{cell['std']:.3f}".ljust(18)
                        if cell else "-".ljust(18))
            lines.append(row)
        return "\n".join(lines)


def run_comparison(
    zoo: list[ZooMember],
    autoencoder_weights,
    tasks: list[ToyTask],
    conditions: list[str],
    budget: int,
    seeds: list[int],
    count: int = 10,
    keep: int = 3,
    bandwidth_rule: str | float = "scott",
    drop_p: float = 0.5,
    sparsity: float = 0.5,
    finetune_lr: float = 0.02,
) -> EvalReport:
    """Fine-tune every condition under the identical budget and seed set.

    The prompt for each task is its first zoo member; generated candidates
    follow the 10-candidates/keep-3 selection protocol against the task's
    probe split.
    """
    from .generation import ProbeSet, generate, rank_candidates

    unknown = set(conditions) - set(CONDITIONS)
    if unknown:
        raise ValueError(f"unknown conditions {sorted(unknown)}")
    report = EvalReport(seeds=list(seeds), budget=budget)
    by_task = {task.name: [m for m in zoo if m.task.name == task.name] for task in tasks}
    for task in tasks:
        members = by_task[task.name]
        if not members:
            raise EmptyInput(f"no zoo members for task {task.name}")
        prompt = members[0].weights
        data = task.data()
        for seed in seeds:
            if "scratch" in conditions:
                init = init_classifier(
                    classifier_widths(prompt), derive_seed("scratch", task.name, seed)
                )
                result = finetune(init, task, budget, seed, lr=finetune_lr)
                report.record("scratch", task.name, seed, [result.test_accuracy],
                              result.val_trajectory)
            if "prompt" in conditions:
                result = finetune(prompt, task, budget, seed, lr=finetune_lr)
                report.record("prompt", task.name, seed, [result.test_accuracy],
                              result.val_trajectory)
            if "generated" in conditions:
                gen_seeds = [derive_seed("gen", task.name, seed, j) for j in range(count)]
                candidates = generate(prompt, autoencoder_weights, count,
                                      seeds=gen_seeds, bandwidth_rule=bandwidth_rule)
                top = rank_candidates(
                    candidates, ProbeSet(data["X_probe"], data["y_probe"]), keep
                )
                values, trajectories = [], []
                for cand in top:
                    result = finetune(cand.weights, task, budget, seed, lr=finetune_lr)
                    values.append(result.test_accuracy)
                    trajectories.append(result.val_trajectory)
                mean_traj = np.mean(np.asarray(trajectories), axis=0).tolist() \
                    if trajectories and trajectories[0] else None
                report.record("generated", task.name, seed, values, mean_traj)
            if "dare" in conditions:
                donors = [m.weights for m in members[1:3]] or [prompt]
                merged = dare_merge(prompt, donors, drop_p, derive_seed("dare", task.name, seed))
                result = finetune(merged, task, budget, seed, lr=finetune_lr)
                report.record("dare", task.name, seed, [result.test_accuracy],
                              result.val_trajectory)
            if "pruned" in conditions:
                result = finetune(magnitude_prune(prompt, sparsity), task, budget, seed,
                                  lr=finetune_lr)
                report.record("pruned", task.name, seed, [result.test_accuracy],
                              result.val_trajectory)
    report.finalize()
    return report


def export_latents(
    embeddings: list[tuple[PromptEmbedding, str, str]],
    path: str | Path,
    seed: int = 0,
    per_model: int = 100,
) -> int:
    """Write sampled token latents as CSV rows for projection tooling.

    One row per sampled latent: latent_0..latent_{d-1}, model_id, family,
    modality. Samples per_model tokens per model (all of them when a model
    has fewer), without replacement, deterministically.
    """
    if not embeddings:
        raise EmptyInput("no embeddings to export")
    dim = embeddings[0][0].latent_dim
    rows_written = 0
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"latent_{i}" for i in range(dim)] + ["model_id", "family", "modality"])
        for emb, family, modality in embeddings:
            latents = emb.real_latents()
            take = min(per_model, latents.shape[0])
            rng = np.random.default_rng(derive_seed(seed, "latent-export", emb.prompt_id))
            chosen = rng.choice(latents.shape[0], size=take, replace=False)
            for row_index in sorted(int(c) for c in chosen):
                row = [repr(float(v)) for v in latents[row_index]]
                writer.writerow(row + [emb.prompt_id, family, modality])
                rows_written += 1
    return rows_written
