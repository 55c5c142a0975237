"""Optimization loop: AdamW, one-cycle schedule, and the chunk-pair regime.

The loop draws batches of chunks, builds (clean, noised) view pairs, and
minimizes the combined reconstruction + contrastive objective. Token values
are divided by each model's value scale before they reach the network, which
makes the per-entry reconstruction error identical to the raw-space error
divided by the model's value variance (the runtime loss normalization).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autoencoder import (
    AutoencoderConfig,
    AutoencoderWeights,
    batch_loss,
    init_weights,
    loss_and_grads,
    save_weights,
)
from .errors import DivergedLoss, EmptyDataset, NonFiniteUpdate, ShapeMismatch, StepOutOfRange
from .seeding import derive_seed, hash_bucket
from .tokenizer import TokenChunk, TokenSequence, chunk_sequence, noise_view

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 200
    batch_size: int = 16
    max_lr: float = 1e-3
    weight_decay: float = 3e-9
    gamma: float = 0.05
    sigma_aug: float = 0.05
    temperature: float = 0.1
    seed: int = 0
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.max_lr < 0 or self.weight_decay < 0 or self.sigma_aug < 0:
            raise ValueError("max_lr, weight_decay and sigma_aug must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.pct_start < 1.0:
            raise ValueError("pct_start must be in (0, 1)")
        if self.div_factor <= 1 or self.final_div_factor <= 1:
            raise ValueError("div factors must exceed 1")


# hyperparameters of the full-scale reference setup, kept as a named preset
PAPER_SCALE = {"epochs": 150, "max_lr": 2e-5, "weight_decay": 3e-9, "d_t": 230}


@dataclass
class OptimizerState:
    """AdamW first/second moments per parameter plus the step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
            t=0,
        )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_checkpoint_path: str | None = None

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(
                {"epoch": r.epoch, "train_loss": r.train_loss,
                 "val_loss": r.val_loss, "lr": r.lr},
                sort_keys=True,
            ) + "\n"
            for r in self.records
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One AdamW update with decoupled weight decay and bias correction."""
    t = state.t + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        updated = p - lr * weight_decay * p - lr * m_hat / (np.sqrt(v_hat) + eps)
        if not np.isfinite(updated).all():
            raise NonFiniteUpdate(f"non-finite update for {name}")
        new_params[name] = updated
        new_m[name] = m
        new_v[name] = v
    return new_params, OptimizerState(new_m, new_v, t)


def onecycle_lr(step: int, total_steps: int, cfg: TrainingConfig) -> float:
    """Cosine warmup to max_lr over pct_start of the run, cosine anneal after."""
    if not 0 <= step < total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {total_steps})")
    start_lr = cfg.max_lr / cfg.div_factor
    final_lr = cfg.max_lr / cfg.final_div_factor
    if total_steps == 1:
        return cfg.max_lr
    peak = min(max(round(cfg.pct_start * total_steps), 1), total_steps - 1)
    if step <= peak:
        t = step / peak
        return start_lr + (cfg.max_lr - start_lr) * 0.5 * (1.0 - math.cos(math.pi * t))
    t = (step - peak) / (total_steps - peak)
    return final_lr + (cfg.max_lr - final_lr) * 0.5 * (1.0 + math.cos(math.pi * t))


def split_dataset(dataset: list[TokenSequence]) -> tuple[list[TokenSequence], list[TokenSequence]]:
    """Deterministic 90/10 split by model id hash; both sides non-empty."""
    if len(dataset) == 1:
        logger.warning("single-model dataset: validating on the training model")
        return list(dataset), list(dataset)
    train = [s for s in dataset if hash_bucket(s.source_id) != 0]
    val = [s for s in dataset if hash_bucket(s.source_id) == 0]
    if not val:
        train.sort(key=lambda s: s.source_id)
        val = [train.pop()]
    if not train:
        val.sort(key=lambda s: s.source_id)
        train = [val.pop(0)]
    return train, val


def _scaled_chunks(sequences: list[TokenSequence], window: int, d_t: int) -> list[TokenChunk]:
    """Chunk every sequence and divide token values by the model's scale."""
    chunks = []
    for seq in sequences:
        if seq.d_t != d_t:
            raise ShapeMismatch(f"{seq.source_id}: sequence d_t {seq.d_t} != model d_t {d_t}")
        for chunk in chunk_sequence(seq, window):
            chunks.append(replace(chunk, tokens=chunk.tokens / seq.scale))
    return chunks


def _make_pairs(chunks, indices, cfg: TrainingConfig, noise_tag) -> list:
    pairs = []
    for i in indices:
        chunk = chunks[i]
        seed = derive_seed(cfg.seed, "noise", noise_tag, i)
        pairs.append((chunk, noise_view(chunk, cfg.sigma_aug, seed)))
    return pairs


def _epoch_batches(n: int, batch_size: int, drop_single: bool) -> list[list[int]]:
    batches = [list(range(i, min(i + batch_size, n))) for i in range(0, n, batch_size)]
    if drop_single and batches and len(batches[-1]) == 1 and len(batches) > 1:
        batches.pop()
    return batches


def train(
    dataset: list[TokenSequence],
    cfg: TrainingConfig,
    model_cfg: AutoencoderConfig,
    init: AutoencoderWeights | None = None,
    checkpoint_path: str | Path | None = None,
) -> tuple[AutoencoderWeights, TrainingHistory]:
    """Train the autoencoder; returns the lowest-validation-loss weights.

    Fully reproducible given the same dataset, configs, seed and init. The
    ``init`` argument expresses the pretrain-then-finetune regime: pass the
    weights of a previous run to continue from them.
    """
    if not dataset:
        raise EmptyDataset("training requires at least one token sequence")
    weights = init.copy() if init is not None else init_weights(model_cfg, cfg.seed)
    if init is not None and init.config != model_cfg:
        raise ShapeMismatch("init weights were built for a different configuration")

    train_seqs, val_seqs = split_dataset(dataset)
    train_chunks = _scaled_chunks(train_seqs, model_cfg.window, model_cfg.d_t)
    val_chunks = _scaled_chunks(val_seqs, model_cfg.window, model_cfg.d_t)
    if not train_chunks or not val_chunks:
        raise EmptyDataset("dataset holds no tokens after chunking")

    drop_single = cfg.gamma > 0.0
    batches_per_epoch = len(_epoch_batches(len(train_chunks), cfg.batch_size, drop_single))
    total_steps = cfg.epochs * batches_per_epoch
    val_batches = _epoch_batches(len(val_chunks), cfg.batch_size, drop_single=False)

    state = OptimizerState.zeros_like(weights.arrays)
    history = TrainingHistory()
    best_val = math.inf
    best_weights = weights.copy()
    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng(derive_seed(cfg.seed, "order", epoch)).permutation(
            len(train_chunks)
        )
        losses = []
        lr = 0.0
        for batch in _epoch_batches(len(train_chunks), cfg.batch_size, drop_single):
            indices = [int(order[i]) for i in batch]
            pairs = _make_pairs(train_chunks, indices, cfg, noise_tag=epoch)
            total, _, _, grads = loss_and_grads(pairs, weights, cfg.gamma, cfg.temperature)
            if not math.isfinite(total):
                raise DivergedLoss(f"training loss {total} at step {step}")
            lr = onecycle_lr(step, total_steps, cfg)
            new_arrays, state = adamw_step(
                weights.arrays, grads, state, lr, cfg.weight_decay
            )
            weights = AutoencoderWeights(model_cfg, new_arrays)
            losses.append(total)
            step += 1

        val_losses = []
        for batch in val_batches:
            pairs = _make_pairs(val_chunks, batch, cfg, noise_tag="val")
            gamma = cfg.gamma if len(pairs) > 1 else 0.0
            total, _, _ = batch_loss(pairs, weights, gamma, cfg.temperature)
            val_losses.append(total)
        val_loss = float(np.mean(val_losses)) if val_losses else math.inf
        if not math.isfinite(val_loss):
            raise DivergedLoss(f"validation loss {val_loss} after epoch {epoch}")

        history.records.append(
            EpochRecord(epoch, float(np.mean(losses)) if losses else 0.0, val_loss, lr)
        )
        if val_loss < best_val:
            best_val = val_loss
            best_weights = weights.copy()
            if checkpoint_path is not None:
                save_weights(best_weights, checkpoint_path)
                history.best_checkpoint_path = str(checkpoint_path)

    return best_weights, history
