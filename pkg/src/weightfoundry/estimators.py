"""Scikit-learn style estimators wrapping the weight-space pipeline.

These give the toolkit a fit/transform surface that composes with the
wider ecosystem (get_params, set_params, clone, pipelines). The underlying
functional modules stay importable on their own.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .autoencoder import AutoencoderConfig, AutoencoderWeights, load_weights, save_weights
from .container import TensorMap
from .generation import (
    CandidateModel,
    ProbeSet,
    embed_prompt,
    fit_kde,
    generate,
    rank_candidates,
    sample_latents,
    decode_embedding,
)
from .tokenizer import TokenSequence, detokenize, tokenize_model
from .training import TrainingConfig, train


def _as_sequences(X, d_t: int) -> list[TokenSequence]:
    items = X if isinstance(X, (list, tuple)) else [X]
    sequences = []
    for item in items:
        if isinstance(item, TokenSequence):
            sequences.append(item)
        elif isinstance(item, TensorMap):
            sequences.append(tokenize_model(item, d_t))
        else:
            raise TypeError(f"expected TensorMap or TokenSequence, got {type(item).__name__}")
    return sequences


class WeightTokenizer(BaseEstimator, TransformerMixin):
    """Stateless transformer between tensor maps and token sequences."""

    def __init__(self, d_t: int = 16):
        self.d_t = d_t

    def fit(self, X=None, y=None):
        if self.d_t < 1:
            raise ValueError("d_t must be >= 1")
        return self

    def transform(self, X):
        if isinstance(X, TensorMap):
            return tokenize_model(X, self.d_t)
        return [tokenize_model(m, self.d_t) for m in X]

    def inverse_transform(self, X):
        if isinstance(X, TokenSequence):
            return detokenize(X)
        return [detokenize(s) for s in X]


class SequenceAutoencoder(BaseEstimator, TransformerMixin):
    """Weight-space autoencoder with the full training loop behind fit().

    fit() accepts a list of TensorMap (tokenized internally) or of
    TokenSequence; transform() returns one unit-norm latent embedding row
    per model.
    """

    def __init__(
        self,
        d_t: int = 16,
        latent_dim: int = 32,
        proj_dim: int = 16,
        num_layers_enc: int = 2,
        num_layers_dec: int = 2,
        num_heads: int = 4,
        ff_dim: int = 64,
        window: int = 16,
        max_layer_index: int = 31,
        max_k_index: int = 63,
        epochs: int = 200,
        batch_size: int = 16,
        max_lr: float = 1e-3,
        weight_decay: float = 3e-9,
        gamma: float = 0.05,
        sigma_aug: float = 0.05,
        temperature: float = 0.1,
        seed: int = 0,
        pct_start: float = 0.3,
        div_factor: float = 25.0,
        final_div_factor: float = 1e4,
        checkpoint_path: str | None = None,
    ):
        self.d_t = d_t
        self.latent_dim = latent_dim
        self.proj_dim = proj_dim
        self.num_layers_enc = num_layers_enc
        self.num_layers_dec = num_layers_dec
        self.num_heads = num_heads
        self.ff_dim = ff_dim
        self.window = window
        self.max_layer_index = max_layer_index
        self.max_k_index = max_k_index
        self.epochs = epochs
        self.batch_size = batch_size
        self.max_lr = max_lr
        self.weight_decay = weight_decay
        self.gamma = gamma
        self.sigma_aug = sigma_aug
        self.temperature = temperature
        self.seed = seed
        self.pct_start = pct_start
        self.div_factor = div_factor
        self.final_div_factor = final_div_factor
        self.checkpoint_path = checkpoint_path

    def model_config(self) -> AutoencoderConfig:
        return AutoencoderConfig(
            d_t=self.d_t,
            latent_dim=self.latent_dim,
            proj_dim=self.proj_dim,
            num_layers_enc=self.num_layers_enc,
            num_layers_dec=self.num_layers_dec,
            num_heads=self.num_heads,
            ff_dim=self.ff_dim,
            window=self.window,
            max_layer_index=self.max_layer_index,
            max_k_index=self.max_k_index,
        )

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            max_lr=self.max_lr,
            weight_decay=self.weight_decay,
            gamma=self.gamma,
            sigma_aug=self.sigma_aug,
            temperature=self.temperature,
            seed=self.seed,
            pct_start=self.pct_start,
            div_factor=self.div_factor,
            final_div_factor=self.final_div_factor,
        )

    def fit(self, X, y=None, init: AutoencoderWeights | None = None):
        sequences = _as_sequences(X, self.d_t)
        self.weights_, self.history_ = train(
            sequences,
            self.training_config(),
            self.model_config(),
            init=init,
            checkpoint_path=self.checkpoint_path,
        )
        return self

    def _check_fitted(self) -> AutoencoderWeights:
        weights = getattr(self, "weights_", None)
        if weights is None:
            raise NotFittedError("call fit() or load() first")
        return weights

    def transform(self, X) -> np.ndarray:
        """One unit-norm embedding row per model: mean of chunk projections."""
        from .autoencoder import project

        weights = self._check_fitted()
        rows = []
        for seq in _as_sequences(X, self.d_t):
            emb = embed_prompt(detokenize(seq), weights)
            chunk_vectors = [project(latent, weights) for latent in emb.chunks]
            mean = np.mean(chunk_vectors, axis=0)
            rows.append(mean / np.linalg.norm(mean))
        return np.asarray(rows)

    def encode_model(self, prompt: TensorMap):
        return embed_prompt(prompt, self._check_fitted())

    def reconstruct(self, prompt: TensorMap) -> TensorMap:
        weights = self._check_fitted()
        return decode_embedding(embed_prompt(prompt, weights), weights)

    def save(self, path: str) -> None:
        save_weights(self._check_fitted(), path)

    def load(self, path: str) -> "SequenceAutoencoder":
        self.weights_ = load_weights(path)
        return self


class KdeWeightGenerator(BaseEstimator):
    """Fit a KDE around one prompt model and sample candidate weights."""

    def __init__(self, autoencoder=None, bandwidth_rule: str | float = "scott",
                 count: int = 10, keep: int = 3, criterion: str = "loss"):
        self.autoencoder = autoencoder
        self.bandwidth_rule = bandwidth_rule
        self.count = count
        self.keep = keep
        self.criterion = criterion

    def _weights(self) -> AutoencoderWeights:
        ae = self.autoencoder
        if isinstance(ae, AutoencoderWeights):
            return ae
        if isinstance(ae, SequenceAutoencoder):
            return ae._check_fitted()
        raise TypeError("autoencoder must be AutoencoderWeights or a fitted SequenceAutoencoder")

    def fit(self, X: TensorMap, y=None):
        self.embedding_ = embed_prompt(X, self._weights())
        self.kde_ = fit_kde(self.embedding_, self.bandwidth_rule)
        return self

    def sample(self, seed: int = 0) -> TensorMap:
        if getattr(self, "kde_", None) is None:
            raise NotFittedError("call fit() first")
        sampled = sample_latents(self.kde_, self.embedding_, seed)
        return decode_embedding(sampled, self._weights())

    def generate(self, prompt: TensorMap, seeds: list[int] | None = None) -> list[CandidateModel]:
        return generate(prompt, self._weights(), self.count, seeds, self.bandwidth_rule)

    def generate_ranked(self, prompt: TensorMap, probe: ProbeSet,
                        seeds: list[int] | None = None) -> list[CandidateModel]:
        candidates = self.generate(prompt, seeds)
        return rank_candidates(candidates, probe, self.keep, self.criterion)
