"""Generate new model weights around a prompt model.

The prompt is tokenized and encoded; a Gaussian kernel density estimate is
fitted over its token latents; sampling perturbs each token latent around
its own center (which keeps the positional structure of the sequence
intact); decoded tokens are rescaled by the prompt's value scale and
de-tokenized into weights with exactly the prompt's shapes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autoencoder import AutoencoderWeights, LatentSequence, decode, encode
from .container import TensorMap, save_checkpoint
from .errors import EmptyEmbedding, EmptyProbe, ShapeMismatch
from .mlp import evaluate
from .tokenizer import (
    LayerLayout,
    TokenChunk,
    TokenSequence,
    chunk_sequence,
    detokenize,
    tokenize_model,
)

logger = logging.getLogger(__name__)


@dataclass
class PromptEmbedding:
    """Per-chunk latents covering the full prompt model, plus inversion data."""

    chunks: list[LatentSequence]
    pad_rows: list[int]
    prompt_id: str
    layout: list[LayerLayout]
    d_t: int
    scale: float

    @property
    def latent_dim(self) -> int:
        return int(self.chunks[0].latents.shape[1])

    def real_latents(self) -> np.ndarray:
        """All token latents of real (non padding) rows, flattened over chunks."""
        rows = []
        for latent in self.chunks:
            real = latent.mask.max(axis=-1) > 0
            rows.append(latent.latents[real])
        return np.concatenate(rows) if rows else np.zeros((0, 0))

    def copy(self) -> "PromptEmbedding":
        return PromptEmbedding(
            [LatentSequence(c.latents.copy(), c.positions.copy(), c.mask.copy())
             for c in self.chunks],
            list(self.pad_rows), self.prompt_id, list(self.layout), self.d_t, self.scale,
        )


@dataclass
class KdeModel:
    """Gaussian KDE over the prompt's token latents."""

    centers: np.ndarray     # [n, latent_dim]
    bandwidth: float
    dim: int

    def __post_init__(self):
        if self.bandwidth < 0:
            raise ValueError("bandwidth must be non-negative")


@dataclass
class CandidateModel:
    weights: TensorMap
    prompt_id: str
    seed: int
    probe_score: float = math.nan
    rank: int = 0
    extra: dict[str, str] = field(default_factory=dict)


def embed_prompt(
    prompt: TensorMap,
    weights: AutoencoderWeights,
    d_t: int | None = None,
    window: int | None = None,
) -> PromptEmbedding:
    """Tokenize, scale-normalize, chunk, and encode a prompt model."""
    cfg = weights.config
    d_t = cfg.d_t if d_t is None else d_t
    window = cfg.window if window is None else window
    if d_t != cfg.d_t or window != cfg.window:
        raise ShapeMismatch(
            f"requested d_t={d_t}, window={window}; weights expect "
            f"d_t={cfg.d_t}, window={cfg.window}"
        )
    seq = tokenize_model(prompt, d_t)
    chunks = chunk_sequence(seq, window)
    latents, pad_rows = [], []
    for chunk in chunks:
        scaled = replace(chunk, tokens=chunk.tokens / seq.scale)
        latents.append(encode(scaled, weights))
        pad_rows.append(chunk.pad_rows)
    return PromptEmbedding(latents, pad_rows, seq.source_id, seq.layout, d_t, seq.scale)


def fit_kde(emb: PromptEmbedding, bandwidth_rule: str | float = "scott") -> KdeModel:
    """Fit the sampling distribution around the prompt's latents.

    Scott's rule: h = n^(-1/(d+4)) * mean per-dimension std of the latents.
    A fixed bandwidth can be given as a float or as "fixed:<h>".
    """
    centers = emb.real_latents()
    if centers.shape[0] == 0:
        raise EmptyEmbedding("prompt produced no unmasked latents")
    dim = centers.shape[1]
    if isinstance(bandwidth_rule, (int, float)):
        h = float(bandwidth_rule)
    elif bandwidth_rule == "scott":
        n = centers.shape[0]
        sigma_bar = float(np.std(centers, axis=0).mean())
        h = n ** (-1.0 / (dim + 4)) * sigma_bar
        if h == 0.0:
            logger.warning("degenerate KDE: zero spread in prompt latents, h=0")
    elif isinstance(bandwidth_rule, str) and bandwidth_rule.startswith("fixed:"):
        h = float(bandwidth_rule.split(":", 1)[1])
    else:
        raise ValueError(f"unknown bandwidth rule {bandwidth_rule!r}")
    if h < 0:
        raise ValueError(f"bandwidth must be non-negative, got {h}")
    return KdeModel(centers, h, dim)


def sample_latents(kde: KdeModel, emb: PromptEmbedding, seed: int) -> PromptEmbedding:
    """One KDE draw conditioned on each token's own center.

    Every unmasked token latent moves by bandwidth * standard normal noise;
    masked rows are untouched, and h = 0 reproduces the embedding exactly.
    """
    out = emb.copy()
    if kde.bandwidth == 0.0:
        return out
    rng = np.random.default_rng(seed)
    for latent in out.chunks:
        real = latent.mask.max(axis=-1) > 0
        noise = rng.normal(0.0, 1.0, size=(int(real.sum()), latent.latents.shape[1]))
        latent.latents[real] = latent.latents[real] + kde.bandwidth * noise
    return out


def decode_embedding(emb: PromptEmbedding, weights: AutoencoderWeights) -> TensorMap:
    """Decode chunk latents, undo the scale normalization, de-tokenize."""
    if not emb.chunks:
        raise EmptyEmbedding(f"prompt {emb.prompt_id!r} has no chunks to decode")
    token_rows, mask_rows, pos_rows = [], [], []
    for latent, pad in zip(emb.chunks, emb.pad_rows):
        decoded = decode(latent, weights)
        real = latent.latents.shape[0] - pad
        token_rows.append(decoded[:real] * emb.scale)
        mask_rows.append(latent.mask[:real])
        pos_rows.append(latent.positions[:real])
    seq = TokenSequence(
        tokens=np.concatenate(token_rows),
        mask=np.concatenate(mask_rows),
        positions=np.concatenate(pos_rows),
        layout=list(emb.layout),
        d_t=emb.d_t,
        source_id=emb.prompt_id,
        scale=emb.scale,
    )
    return detokenize(seq)


def autoencode(prompt: TensorMap, weights: AutoencoderWeights) -> TensorMap:
    """Plain reconstruction of a prompt through the autoencoder."""
    return decode_embedding(embed_prompt(prompt, weights), weights)


def generate(
    prompt: TensorMap,
    weights: AutoencoderWeights,
    count: int = 10,
    seeds: list[int] | None = None,
    bandwidth_rule: str | float = "scott",
) -> list[CandidateModel]:
    """Sample `count` candidate weight sets around the prompt."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    seeds = list(range(count)) if seeds is None else list(seeds)
    if len(seeds) != count:
        raise ValueError(f"{len(seeds)} seeds for count={count}")
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    emb = embed_prompt(prompt, weights)
    kde = fit_kde(emb, bandwidth_rule)
    candidates = []
    for seed in seeds:
        sampled = sample_latents(kde, emb, seed)
        candidates.append(CandidateModel(decode_embedding(sampled, weights), emb.prompt_id, seed))
    return candidates


@dataclass
class ProbeSet:
    """Small labeled set used as the candidate selection criterion."""

    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def rank_candidates(
    candidates: list[CandidateModel],
    probe: ProbeSet,
    m: int,
    criterion: str = "loss",
) -> list[CandidateModel]:
    """Keep the top-m candidates by zero-shot probe score.

    "loss" ranks by probe cross-entropy ascending; "accuracy" by probe
    accuracy descending. Ties break toward the lower seed; ranks are 1..m.
    """
    if probe is None or len(probe) == 0:
        raise EmptyProbe("ranking requires a non-empty probe set")
    if not 1 <= m <= len(candidates):
        raise ValueError(f"m={m} outside [1, {len(candidates)}]")
    if criterion not in ("loss", "accuracy"):
        raise ValueError(f"unknown criterion {criterion!r}")
    scored = []
    for cand in candidates:
        loss, accuracy = evaluate(cand.weights, probe.features, probe.labels)
        score = loss if criterion == "loss" else -accuracy
        scored.append(replace(cand, probe_score=score))
    scored.sort(key=lambda c: (c.probe_score, c.seed))
    top = []
    for rank, cand in enumerate(scored[:m], start=1):
        top.append(replace(cand, rank=rank))
    return top


def save_candidate(candidate: CandidateModel, out_dir: str | Path) -> Path:
    """Persist one candidate as {prompt_id}.gen{seed}.safetensors."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{candidate.prompt_id}.gen{candidate.seed}.safetensors"
    tmap = TensorMap(
        list(candidate.weights.records),
        source_id=candidate.weights.source_id,
        metadata={
            "prompt_id": candidate.prompt_id,
            "seed": str(candidate.seed),
            "probe_score": repr(candidate.probe_score),
            **candidate.extra,
        },
    )
    save_checkpoint(tmap, path)
    return path
