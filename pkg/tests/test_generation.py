import math

import numpy as np
import pytest

from weightfoundry.autoencoder import AutoencoderConfig, LatentSequence, init_weights
from weightfoundry.container import TensorMap, TensorRecord
from weightfoundry.errors import EmptyEmbedding, EmptyProbe
from weightfoundry.generation import (
    CandidateModel,
    ProbeSet,
    PromptEmbedding,
    autoencode,
    embed_prompt,
    fit_kde,
    generate,
    rank_candidates,
    sample_latents,
    save_candidate,
)

TINY = AutoencoderConfig(d_t=4, latent_dim=8, proj_dim=4, num_layers_enc=1,
                         num_layers_dec=1, num_heads=2, ff_dim=16, window=4,
                         max_layer_index=7, max_k_index=15)


def _prompt(seed=0):
    rng = np.random.default_rng(seed)
    return TensorMap(
        [
            TensorRecord("layers.0.weight", (5, 2), "f32", rng.normal(size=10)),
            TensorRecord("layers.0.bias", (5,), "f32", rng.normal(size=5)),
            TensorRecord("layers.1.weight", (3, 5), "f32", rng.normal(size=15)),
            TensorRecord("layers.1.bias", (3,), "f32", rng.normal(size=3)),
        ],
        source_id="prompt0",
    )


def _embedding_from_rows(rows: np.ndarray) -> PromptEmbedding:
    """Build a bare embedding whose real latents are exactly `rows`."""
    n, dim = rows.shape
    latent = LatentSequence(
        latents=rows.copy(),
        positions=np.stack([np.arange(n), np.zeros(n, int), np.arange(n)], axis=1),
        mask=np.ones((n, 2)),
    )
    return PromptEmbedding([latent], [0], "synthetic", [], 2, 1.0)


class TestEmbedPrompt:
    def test_chunk_count(self):
        weights = init_weights(TINY, 0)
        emb = embed_prompt(_prompt(), weights)
        from weightfoundry.tokenizer import tokenize_model

        n_tokens = len(tokenize_model(_prompt(), TINY.d_t))
        assert len(emb.chunks) == math.ceil(n_tokens / TINY.window)

    def test_deterministic(self):
        weights = init_weights(TINY, 0)
        a = embed_prompt(_prompt(), weights)
        b = embed_prompt(_prompt(), weights)
        for ca, cb in zip(a.chunks, b.chunks):
            np.testing.assert_array_equal(ca.latents, cb.latents)


class TestFitKde:
    def test_fixed_zero(self):
        emb = _embedding_from_rows(np.random.default_rng(0).normal(size=(5, 8)))
        assert fit_kde(emb, 0.0).bandwidth == 0.0
        assert fit_kde(emb, "fixed:0").bandwidth == 0.0
        assert fit_kde(emb, "fixed:0.25").bandwidth == 0.25

    def test_scott_closed_form(self):
        # 100 latents in 16 dims with per-dimension std exactly 1
        rows = np.tile(np.array([[1.0], [-1.0]]), (50, 16))
        emb = _embedding_from_rows(rows)
        kde = fit_kde(emb, "scott")
        expected = 100 ** (-1.0 / 20.0)
        assert kde.bandwidth == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.7943, abs=5e-5)

    def test_single_degenerate_latent(self):
        emb = _embedding_from_rows(np.ones((1, 8)))
        assert fit_kde(emb, "scott").bandwidth == 0.0

    def test_empty_embedding(self):
        emb = _embedding_from_rows(np.ones((1, 8)))
        emb.chunks[0].mask[:] = 0.0
        with pytest.raises(EmptyEmbedding):
            fit_kde(emb, "scott")


class TestSampleLatents:
    def test_zero_bandwidth_identity(self):
        emb = _embedding_from_rows(np.random.default_rng(1).normal(size=(6, 8)))
        kde = fit_kde(emb, 0.0)
        sampled = sample_latents(kde, emb, seed=3)
        np.testing.assert_array_equal(sampled.chunks[0].latents, emb.chunks[0].latents)

    def test_deterministic(self):
        emb = _embedding_from_rows(np.random.default_rng(2).normal(size=(6, 8)))
        kde = fit_kde(emb, 0.5)
        a = sample_latents(kde, emb, seed=9)
        b = sample_latents(kde, emb, seed=9)
        np.testing.assert_array_equal(a.chunks[0].latents, b.chunks[0].latents)
        c = sample_latents(kde, emb, seed=10)
        assert np.any(a.chunks[0].latents != c.chunks[0].latents)

    def test_masked_rows_untouched(self):
        rows = np.random.default_rng(3).normal(size=(6, 8))
        emb = _embedding_from_rows(rows)
        emb.chunks[0].mask[4:] = 0.0
        emb.pad_rows[0] = 2
        kde = fit_kde(emb, 0.7)
        sampled = sample_latents(kde, emb, seed=1)
        np.testing.assert_array_equal(sampled.chunks[0].latents[4:], rows[4:])
        assert np.all(sampled.chunks[0].latents[:4] != rows[:4])

    def test_perturbation_std_matches_bandwidth(self):
        rows = np.zeros((2500, 4))
        emb = _embedding_from_rows(rows)
        kde = fit_kde(emb, 0.3)
        sampled = sample_latents(kde, emb, seed=11)
        delta = sampled.chunks[0].latents - rows
        assert delta.size == 10_000
        assert abs(np.std(delta) - 0.3) / 0.3 < 0.05


class TestGenerate:
    def test_count_and_distinct_seeds(self):
        weights = init_weights(TINY, 0)
        candidates = generate(_prompt(), weights, count=10)
        assert len(candidates) == 10
        assert len({c.seed for c in candidates}) == 10

    def test_shapes_match_prompt(self):
        weights = init_weights(TINY, 0)
        prompt = _prompt()
        for candidate in generate(prompt, weights, count=3):
            assert candidate.weights.shape_signature() == prompt.shape_signature()

    def test_zero_bandwidth_equals_autoencode(self):
        weights = init_weights(TINY, 0)
        prompt = _prompt()
        reference = autoencode(prompt, weights)
        for candidate in generate(prompt, weights, count=4, bandwidth_rule=0.0):
            assert candidate.weights == reference

    def test_candidates_differ_with_positive_bandwidth(self):
        weights = init_weights(TINY, 0)
        candidates = generate(_prompt(), weights, count=2, bandwidth_rule=0.5)
        assert candidates[0].weights != candidates[1].weights

    def test_deterministic(self):
        weights = init_weights(TINY, 0)
        a = generate(_prompt(), weights, count=3, seeds=[5, 6, 7])
        b = generate(_prompt(), weights, count=3, seeds=[5, 6, 7])
        for ca, cb in zip(a, b):
            assert ca.weights == cb.weights

    def test_seed_validation(self):
        weights = init_weights(TINY, 0)
        with pytest.raises(ValueError):
            generate(_prompt(), weights, count=2, seeds=[1])
        with pytest.raises(ValueError):
            generate(_prompt(), weights, count=2, seeds=[1, 1])


def _probe_for_ranking():
    rng = np.random.default_rng(0)
    features = rng.normal(size=(64, 2))
    labels = (features[:, 0] > 0).astype(int)
    return ProbeSet(features, labels)


def _candidate_with_gain(gain: float, seed: int) -> CandidateModel:
    """Single-layer net whose probe loss decreases monotonically with gain."""
    weights = TensorMap(
        [
            TensorRecord("layers.0.weight", (2, 2), "f32",
                         np.array([[-gain, 0.0], [gain, 0.0]]).reshape(-1)),
            TensorRecord("layers.0.bias", (2,), "f32", np.zeros(2)),
        ],
        source_id=f"cand{seed}",
    )
    return CandidateModel(weights, "prompt0", seed)


class TestRankCandidates:
    def test_orders_by_probe_loss(self):
        probe = _probe_for_ranking()
        candidates = [
            _candidate_with_gain(0.1, seed=0),   # worst
            _candidate_with_gain(4.0, seed=1),   # best
            _candidate_with_gain(1.0, seed=2),   # middle
        ]
        top = rank_candidates(candidates, probe, m=2)
        assert [c.seed for c in top] == [1, 2]
        assert [c.rank for c in top] == [1, 2]
        assert top[0].probe_score < top[1].probe_score

    def test_m_equals_count_returns_all_sorted(self):
        probe = _probe_for_ranking()
        candidates = [_candidate_with_gain(g, s) for s, g in enumerate((0.5, 2.0, 1.0))]
        top = rank_candidates(candidates, probe, m=3)
        assert [c.seed for c in top] == [1, 2, 0]

    def test_ties_break_by_seed(self):
        probe = _probe_for_ranking()
        candidates = [_candidate_with_gain(1.0, seed=7), _candidate_with_gain(1.0, seed=3)]
        top = rank_candidates(candidates, probe, m=2)
        assert [c.seed for c in top] == [3, 7]

    def test_empty_probe(self):
        with pytest.raises(EmptyProbe):
            rank_candidates([_candidate_with_gain(1.0, 0)],
                            ProbeSet(np.zeros((0, 2)), np.zeros(0, int)), m=1)

    def test_accuracy_criterion(self):
        # a negative gain inverts every prediction, so accuracies differ
        probe = _probe_for_ranking()
        candidates = [_candidate_with_gain(-1.0, 0), _candidate_with_gain(1.0, 1)]
        top = rank_candidates(candidates, probe, m=1, criterion="accuracy")
        assert top[0].seed == 1


def test_save_candidate_filename_and_metadata(tmp_path):
    weights = init_weights(TINY, 0)
    candidates = generate(_prompt(), weights, count=2, bandwidth_rule=0.1)
    path = save_candidate(candidates[1], tmp_path)
    assert path.name == "prompt0.gen1.safetensors"
    from weightfoundry.container import load_checkpoint

    saved = load_checkpoint(path)
    assert saved.metadata["prompt_id"] == "prompt0"
    assert saved.metadata["seed"] == "1"
    assert "probe_score" in saved.metadata
