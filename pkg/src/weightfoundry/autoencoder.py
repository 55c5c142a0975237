"""Sequence autoencoder over weight tokens with exact analytic gradients.

Encoder and decoder are small pre-norm transformer blocks (GELU feed
forward, bidirectional attention) around a latent bottleneck; a two-layer
projection head feeds the contrastive objective. Three learned position
tables (global index mod window, clamped layer index, clamped within-layer
index) are summed into the token embedding and shared with the decoder.
All math runs in float64 on the autodiff engine, so the training gradient
is the exact derivative of the forward pass.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .container import TensorMap, TensorRecord, load_checkpoint, save_checkpoint
from .errors import (
    AllMasked,
    EmptyMask,
    NonFiniteGradient,
    ShapeMismatch,
    SinglePair,
)
from .tokenizer import TokenChunk

_LN_EPS = 1e-5
_NEG_BIG = 1e9


@dataclass(frozen=True)
class AutoencoderConfig:
    d_t: int = 16
    latent_dim: int = 32
    proj_dim: int = 16
    num_layers_enc: int = 2
    num_layers_dec: int = 2
    num_heads: int = 4
    ff_dim: int = 64
    window: int = 16
    max_layer_index: int = 31
    max_k_index: int = 63

    def __post_init__(self):
        if self.latent_dim % self.num_heads != 0:
            raise ValueError("latent_dim must be divisible by num_heads")
        if self.proj_dim > self.latent_dim:
            raise ValueError("proj_dim must not exceed latent_dim")
        for name in ("d_t", "latent_dim", "proj_dim", "num_layers_enc", "num_layers_dec",
                     "num_heads", "ff_dim", "window", "max_layer_index", "max_k_index"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def head_dim(self) -> int:
        return self.latent_dim // self.num_heads


def _block_param_shapes(cfg: AutoencoderConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, f = cfg.latent_dim, cfg.ff_dim
    return [
        ("ln1.g", (d,)), ("ln1.b", (d,)),
        ("attn.wq", (d, d)), ("attn.bq", (d,)),
        ("attn.wk", (d, d)), ("attn.bk", (d,)),
        ("attn.wv", (d, d)), ("attn.bv", (d,)),
        ("attn.wo", (d, d)), ("attn.bo", (d,)),
        ("ln2.g", (d,)), ("ln2.b", (d,)),
        ("mlp.w1", (d, f)), ("mlp.b1", (f,)),
        ("mlp.w2", (f, d)), ("mlp.b2", (d,)),
    ]


def parameter_shapes(cfg: AutoencoderConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Stable, ordered list of every parameter name and shape."""
    d = cfg.latent_dim
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("enc.input.w", (cfg.d_t, d)),
        ("enc.input.b", (d,)),
        ("pos.n", (cfg.window, d)),
        ("pos.l", (cfg.max_layer_index + 1, d)),
        ("pos.k", (cfg.max_k_index + 1, d)),
    ]
    for i in range(cfg.num_layers_enc):
        shapes += [(f"enc.block{i}.{n}", s) for n, s in _block_param_shapes(cfg)]
    shapes += [("enc.final.g", (d,)), ("enc.final.b", (d,))]
    for i in range(cfg.num_layers_dec):
        shapes += [(f"dec.block{i}.{n}", s) for n, s in _block_param_shapes(cfg)]
    shapes += [
        ("dec.final.g", (d,)), ("dec.final.b", (d,)),
        ("dec.output.w", (d, cfg.d_t)), ("dec.output.b", (cfg.d_t,)),
        ("proj.w1", (d, d)), ("proj.b1", (d,)),
        ("proj.w2", (d, cfg.proj_dim)), ("proj.b2", (cfg.proj_dim,)),
    ]
    return shapes


class AutoencoderWeights:
    """All parameter arrays, addressable by name and as one flat vector."""

    def __init__(self, config: AutoencoderConfig, arrays: dict[str, np.ndarray]):
        self.config = config
        expected = dict(parameter_shapes(config))
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise ShapeMismatch(f"parameter names differ (missing {missing}, extra {extra})")
        self.arrays: dict[str, np.ndarray] = {}
        for name, _ in parameter_shapes(config):
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != expected[name]:
                raise ShapeMismatch(f"{name}: got {arr.shape}, expected {expected[name]}")
            self.arrays[name] = arr

    @property
    def names(self) -> list[str]:
        return list(self.arrays)

    @property
    def num_params(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def validate_finite(self) -> None:
        for name, arr in self.arrays.items():
            if not np.isfinite(arr).all():
                raise ValueError(f"non-finite values in parameter {name}")

    def copy(self) -> "AutoencoderWeights":
        return AutoencoderWeights(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def pack(self) -> np.ndarray:
        return np.concatenate([self.arrays[n].reshape(-1) for n in self.names])

    def unpack(self, flat: np.ndarray) -> "AutoencoderWeights":
        out = {}
        cursor = 0
        for name, shape in parameter_shapes(self.config):
            size = math.prod(shape)
            out[name] = flat[cursor : cursor + size].reshape(shape).copy()
            cursor += size
        return AutoencoderWeights(self.config, out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AutoencoderWeights):
            return NotImplemented
        return self.config == other.config and all(
            np.array_equal(self.arrays[n], other.arrays[n]) for n in self.names
        )


def init_weights(cfg: AutoencoderConfig, seed: int = 0) -> AutoencoderWeights:
    """GPT-2 style init: N(0, 0.02) matrices and tables, zero biases, unit gains."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in parameter_shapes(cfg):
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("g",):
            arrays[name] = np.ones(shape)
        elif leaf in ("b", "bq", "bk", "bv", "bo", "b1", "b2"):
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.normal(0.0, 0.02, size=shape)
    return AutoencoderWeights(cfg, arrays)


@dataclass
class LatentSequence:
    """Per-token latent vectors for one chunk, mask and positions carried."""

    latents: np.ndarray      # [window, latent_dim]
    positions: np.ndarray    # [window, 3]
    mask: np.ndarray         # [window, d_t]

    def __len__(self) -> int:
        return int(self.latents.shape[0])


# --- differentiable forward pieces ---

def _params_as_tensors(weights: AutoencoderWeights) -> dict[str, Tensor]:
    return {name: Tensor(arr) for name, arr in weights.arrays.items()}


def _layer_norm(x: Tensor, g: Tensor, b: Tensor) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + _LN_EPS).sqrt() * g + b


def _attention(x: Tensor, p: dict[str, Tensor], prefix: str, cfg: AutoencoderConfig) -> Tensor:
    batch, window, d = x.shape
    h, hd = cfg.num_heads, cfg.head_dim

    def heads(t: Tensor) -> Tensor:
        return t.reshape(batch, window, h, hd).transpose(0, 2, 1, 3)

    q = heads(x @ p[prefix + "attn.wq"] + p[prefix + "attn.bq"])
    k = heads(x @ p[prefix + "attn.wk"] + p[prefix + "attn.bk"])
    v = heads(x @ p[prefix + "attn.wv"] + p[prefix + "attn.bv"])
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(hd))
    mixed = scores.softmax() @ v
    merged = mixed.transpose(0, 2, 1, 3).reshape(batch, window, d)
    return merged @ p[prefix + "attn.wo"] + p[prefix + "attn.bo"]


def _transformer(x: Tensor, p: dict[str, Tensor], side: str, layers: int,
                 cfg: AutoencoderConfig) -> Tensor:
    for i in range(layers):
        prefix = f"{side}.block{i}."
        x = x + _attention(_layer_norm(x, p[prefix + "ln1.g"], p[prefix + "ln1.b"]), p, prefix, cfg)
        pre = _layer_norm(x, p[prefix + "ln2.g"], p[prefix + "ln2.b"])
        x = x + ((pre @ p[prefix + "mlp.w1"] + p[prefix + "mlp.b1"]).gelu()
                 @ p[prefix + "mlp.w2"] + p[prefix + "mlp.b2"])
    return _layer_norm(x, p[f"{side}.final.g"], p[f"{side}.final.b"])


def _position_embedding(p: dict[str, Tensor], positions: np.ndarray,
                        cfg: AutoencoderConfig) -> Tensor:
    n_idx = positions[..., 0] % cfg.window
    l_idx = np.minimum(positions[..., 1], cfg.max_layer_index)
    k_idx = np.minimum(positions[..., 2], cfg.max_k_index)
    return ad.take(p["pos.n"], n_idx) + ad.take(p["pos.l"], l_idx) + ad.take(p["pos.k"], k_idx)


def _encode_batch(tokens: Tensor, positions: np.ndarray, p: dict[str, Tensor],
                  cfg: AutoencoderConfig) -> Tensor:
    x = tokens @ p["enc.input.w"] + p["enc.input.b"]
    x = x + _position_embedding(p, positions, cfg)
    return _transformer(x, p, "enc", cfg.num_layers_enc, cfg)


def _decode_batch(latents: Tensor, positions: np.ndarray, p: dict[str, Tensor],
                  cfg: AutoencoderConfig) -> Tensor:
    x = latents + _position_embedding(p, positions, cfg)
    x = _transformer(x, p, "dec", cfg.num_layers_dec, cfg)
    return x @ p["dec.output.w"] + p["dec.output.b"]


def _project_batch(latents: Tensor, mask: np.ndarray, p: dict[str, Tensor]) -> Tensor:
    """Masked mean over token latents, 2-layer perceptron, L2 normalization."""
    row_real = (mask.max(axis=-1) > 0).astype(np.float64)       # [B, W]
    counts = row_real.sum(axis=-1)                              # [B]
    if np.any(counts == 0):
        raise AllMasked("a chunk with only padding rows cannot be projected")
    pooled = (latents * row_real[:, :, None]).sum(axis=1) / counts[:, None]
    hidden = (pooled @ p["proj.w1"] + p["proj.b1"]).gelu()
    raw = hidden @ p["proj.w2"] + p["proj.b2"]
    norm = ((raw * raw).sum(axis=-1, keepdims=True)).sqrt()
    return raw / norm


def _check_chunk(chunk: TokenChunk, cfg: AutoencoderConfig) -> None:
    if chunk.d_t != cfg.d_t:
        raise ShapeMismatch(f"chunk d_t {chunk.d_t} != config d_t {cfg.d_t}")
    if chunk.window != cfg.window:
        raise ShapeMismatch(f"chunk window {chunk.window} != config window {cfg.window}")


# --- public inference operations ---

def encode(chunk: TokenChunk, weights: AutoencoderWeights) -> LatentSequence:
    """Deterministic encoder pass for one chunk."""
    _check_chunk(chunk, weights.config)
    p = _params_as_tensors(weights)
    out = _encode_batch(Tensor(chunk.tokens[None]), chunk.positions[None], p, weights.config)
    return LatentSequence(out.data[0], chunk.positions.copy(), chunk.mask.copy())


def decode(latent: LatentSequence, weights: AutoencoderWeights) -> np.ndarray:
    """Deterministic decoder pass; returns the reconstructed token matrix."""
    cfg = weights.config
    if latent.latents.shape != (cfg.window, cfg.latent_dim):
        raise ShapeMismatch(
            f"latents {latent.latents.shape} != ({cfg.window}, {cfg.latent_dim})"
        )
    p = _params_as_tensors(weights)
    out = _decode_batch(Tensor(latent.latents[None]), latent.positions[None], p, cfg)
    return out.data[0]


def project(latent: LatentSequence, weights: AutoencoderWeights) -> np.ndarray:
    """Unit-norm contrastive embedding for one chunk."""
    p = _params_as_tensors(weights)
    out = _project_batch(Tensor(latent.latents[None]), latent.mask[None], p)
    return out.data[0]


# --- losses ---

def recon_loss(tokens: np.ndarray, recon: np.ndarray, mask: np.ndarray,
               norm: float = 1.0) -> float:
    """Masked squared reconstruction error, averaged per real entry and
    divided by the runtime normalization scale."""
    tokens, recon, mask = (np.asarray(a, dtype=np.float64) for a in (tokens, recon, mask))
    if not (tokens.shape == recon.shape == mask.shape):
        raise ShapeMismatch(
            f"shapes differ: {tokens.shape}, {recon.shape}, {mask.shape}"
        )
    if norm <= 0:
        raise ValueError(f"norm must be positive, got {norm}")
    count = mask.sum()
    if count == 0:
        raise EmptyMask("mask has no unmasked entries")
    residual = mask * (tokens - recon)
    return float((residual ** 2).sum() / (norm * count))


def ntxent_loss(pairs: list[tuple[np.ndarray, np.ndarray]], temperature: float) -> float:
    """Normalized-temperature cross entropy over 2B anchors.

    Each anchor's positive is its partner view; the other 2B-2 embeddings in
    the batch act as negatives. Embeddings must be unit-norm.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if len(pairs) < 2:
        raise SinglePair("NT-Xent needs at least two pairs for negatives")
    firsts = np.stack([np.asarray(a, dtype=np.float64) for a, _ in pairs])
    seconds = np.stack([np.asarray(b, dtype=np.float64) for _, b in pairs])
    z = np.concatenate([firsts, seconds])
    norms = np.linalg.norm(z, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-6):
        raise ValueError("embeddings must be unit-norm")
    b = len(pairs)
    sims = z @ z.T / temperature
    np.fill_diagonal(sims, -_NEG_BIG)
    row_max = sims.max(axis=1, keepdims=True)
    lse = np.log(np.exp(sims - row_max).sum(axis=1)) + row_max[:, 0]
    partner = np.concatenate([np.arange(b) + b, np.arange(b)])
    positives = sims[np.arange(2 * b), partner]
    return float((lse - positives).mean())


def total_loss(l_rec: float, l_c: float, gamma: float) -> float:
    """Convex combination of reconstruction and contrastive losses."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    if gamma == 0.0:
        return l_rec
    if gamma == 1.0:
        return l_c
    return (1.0 - gamma) * l_rec + gamma * l_c


# --- training forward/backward ---

def _batch_objective(
    pairs: list[tuple[TokenChunk, TokenChunk]],
    p: dict[str, Tensor],
    cfg: AutoencoderConfig,
    gamma: float,
    temperature: float,
    norms: list[float],
) -> tuple[Tensor, Tensor, Tensor | None]:
    """Differentiable batched objective: (total, reconstruction, contrastive).

    Reconstruction targets the first (clean) view of each pair; both views
    are encoded and projected for the contrastive term. With gamma at an
    endpoint the other branch is never entered, so the resulting update is
    exactly the pure-reconstruction or pure-contrastive one.
    """
    clean_tokens = Tensor(np.stack([c.tokens for c, _ in pairs]))
    positions = np.stack([c.positions for c, _ in pairs])
    masks = np.stack([c.mask for c, _ in pairs])

    latents_clean = _encode_batch(clean_tokens, positions, p, cfg)

    # masked per-pair mean squared error over real entries, scaled by norms
    recon = _decode_batch(latents_clean, positions, p, cfg)
    counts = masks.reshape(len(pairs), -1).sum(axis=1)
    if np.any(counts == 0):
        raise EmptyMask("a chunk in the batch has no unmasked entries")
    divisor = np.asarray(norms) * counts
    residual = (clean_tokens - recon) * masks
    per_pair = (residual * residual).sum(axis=2).sum(axis=1) / divisor
    rec_t = per_pair.mean()

    con_t = None
    if gamma > 0.0:
        noised_tokens = Tensor(np.stack([n.tokens for _, n in pairs]))
        latents_noised = _encode_batch(noised_tokens, positions, p, cfg)
        zp = ad.concat([
            _project_batch(latents_clean, masks, p),
            _project_batch(latents_noised, masks, p),
        ])
        b = len(pairs)
        sims = (zp @ zp.swapaxes(0, 1)) / temperature
        sims = sims + np.diag(np.full(2 * b, -_NEG_BIG))
        lse = sims.logsumexp(axis=1)
        partner = np.zeros((2 * b, 2 * b))
        partner[np.arange(2 * b), np.concatenate([np.arange(b) + b, np.arange(b)])] = 1.0
        positives = (sims * partner).sum(axis=1)
        con_t = (lse - positives).mean()

    if gamma == 0.0:
        objective = rec_t
    elif gamma == 1.0:
        objective = con_t
    else:
        objective = (1.0 - gamma) * rec_t + gamma * con_t
    return objective, rec_t, con_t


def _validate_batch(pairs, weights, gamma) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    if not pairs:
        raise ValueError("empty batch")
    if gamma > 0.0 and len(pairs) < 2:
        raise SinglePair("contrastive objective needs at least two pairs")
    for clean, noised in pairs:
        _check_chunk(clean, weights.config)
        _check_chunk(noised, weights.config)


def batch_loss(
    pairs: list[tuple[TokenChunk, TokenChunk]],
    weights: AutoencoderWeights,
    gamma: float,
    temperature: float,
    norms: list[float] | None = None,
) -> tuple[float, float, float]:
    """Forward-only objective: (total, reconstruction, contrastive) values."""
    _validate_batch(pairs, weights, gamma)
    norms = norms if norms is not None else [1.0] * len(pairs)
    p = _params_as_tensors(weights)
    objective, rec_t, con_t = _batch_objective(pairs, p, weights.config, gamma,
                                               temperature, norms)
    return (
        float(objective.data),
        float(rec_t.data),
        float(con_t.data) if con_t is not None else 0.0,
    )


def loss_and_grads(
    pairs: list[tuple[TokenChunk, TokenChunk]],
    weights: AutoencoderWeights,
    gamma: float,
    temperature: float,
    norms: list[float] | None = None,
) -> tuple[float, float, float, dict[str, np.ndarray]]:
    """Batched objective and its gradient w.r.t. every parameter."""
    _validate_batch(pairs, weights, gamma)
    norms = norms if norms is not None else [1.0] * len(pairs)
    p = _params_as_tensors(weights)
    objective, rec_t, con_t = _batch_objective(pairs, p, weights.config, gamma,
                                               temperature, norms)
    objective.backward()
    grads = {}
    for name in weights.names:
        grad = p[name].grad
        grads[name] = np.zeros_like(weights.arrays[name]) if grad is None else grad
        if not np.isfinite(grads[name]).all():
            raise NonFiniteGradient(f"non-finite gradient for {name}")

    rec_value = float(rec_t.data)
    con_value = float(con_t.data) if con_t is not None else 0.0
    return float(objective.data), rec_value, con_value, grads


# --- persistence ---

def save_weights(weights: AutoencoderWeights, path: str | Path) -> None:
    """Write parameters into the checkpoint container plus a config sidecar."""
    records = [
        TensorRecord(name, arr.shape, "f64", arr.reshape(-1))
        for name, arr in weights.arrays.items()
    ]
    save_checkpoint(TensorMap(records, source_id="autoencoder"), path)
    Path(str(path) + ".json").write_text(
        json.dumps(asdict(weights.config), indent=2, sort_keys=True)
    )


def load_weights(path: str | Path) -> AutoencoderWeights:
    cfg = AutoencoderConfig(**json.loads(Path(str(path) + ".json").read_text()))
    tmap = load_checkpoint(path)
    arrays = {r.name: r.values.reshape(r.shape) for r in tmap}
    return AutoencoderWeights(cfg, arrays)
