"""Small fully-connected classifiers stored as checkpoint tensor maps.

These are the desk-scale stand-ins for the model populations the
autoencoder learns from: ReLU perceptrons whose weights live in the same
container format as any other checkpoint.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .container import TensorMap, TensorRecord
from .errors import ShapeMismatch
from .seeding import derive_seed
from .training import OptimizerState, adamw_step


def init_classifier(widths: list[int], seed: int, source_id: str = "") -> TensorMap:
    """He-initialized ReLU MLP with the given layer widths."""
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    rng = np.random.default_rng(seed)
    records = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        records.append(TensorRecord(f"layers.{i}.weight", (fan_out, fan_in), "f32", w.reshape(-1)))
        records.append(TensorRecord(f"layers.{i}.bias", (fan_out,), "f32", np.zeros(fan_out)))
    return TensorMap(records, source_id=source_id)


def classifier_widths(tmap: TensorMap) -> list[int]:
    """Recover layer widths from the weight matrices."""
    weights = sorted(
        (r for r in tmap if r.name.endswith(".weight")),
        key=lambda r: int(r.name.split(".")[1]),
    )
    if not weights:
        raise ShapeMismatch("no layers.*.weight records found")
    widths = [weights[0].shape[1]] + [w.shape[0] for w in weights]
    return widths


def _layer_params(tmap: TensorMap) -> dict[str, np.ndarray]:
    return {r.name: r.values.reshape(r.shape).astype(np.float64) for r in tmap}


def _num_layers(params: dict[str, np.ndarray]) -> int:
    return sum(1 for name in params if name.endswith(".weight"))


def forward_logits(tmap: TensorMap, features: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass; ReLU between layers, linear output."""
    params = _layer_params(tmap)
    x = np.asarray(features, dtype=np.float64)
    layers = _num_layers(params)
    for i in range(layers):
        x = x @ params[f"layers.{i}.weight"].T + params[f"layers.{i}.bias"]
        if i < layers - 1:
            x = np.maximum(x, 0.0)
    return x


def evaluate(tmap: TensorMap, features: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) of a classifier on labeled data."""
    logits = forward_logits(tmap, features)
    labels = np.asarray(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(len(labels)), labels].mean())
    accuracy = float((logits.argmax(axis=1) == labels).mean())
    return loss, accuracy


def _graph_logits(params: dict[str, Tensor], features: np.ndarray) -> Tensor:
    x = ad.as_tensor(features)
    layers = _num_layers({k: t.data for k, t in params.items()})
    for i in range(layers):
        x = x @ params[f"layers.{i}.weight"].swapaxes(0, 1) + params[f"layers.{i}.bias"]
        if i < layers - 1:
            x = x.relu()
    return x


def train_classifier(
    init: TensorMap,
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    lr: float = 0.01,
    batch_size: int = 32,
    seed: int = 0,
    weight_decay: float = 0.0,
    val_data: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[TensorMap, list[float]]:
    """AdamW training from the given initialization; deterministic per seed.

    Returns the trained map and, when val_data is given, the per-epoch
    validation accuracy trajectory.
    """
    params = _layer_params(init)
    state = OptimizerState.zeros_like(params)
    n = len(labels)
    trajectory: list[float] = []
    for epoch in range(epochs):
        order = np.random.default_rng(derive_seed(seed, "mlp-order", epoch)).permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            tensors = {k: Tensor(v) for k, v in params.items()}
            loss = ad.cross_entropy(_graph_logits(tensors, features[idx]), labels[idx])
            loss.backward()
            grads = {k: t.grad if t.grad is not None else np.zeros_like(t.data)
                     for k, t in tensors.items()}
            params, state = adamw_step(params, grads, state, lr, weight_decay)
        if val_data is not None:
            _, accuracy = evaluate(init.replace_values(params), *val_data)
            trajectory.append(accuracy)
    return init.replace_values(params), trajectory
