import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tensor_map
from weightfoundry.container import TensorMap, TensorRecord
from weightfoundry.errors import LayoutMismatch, RankUnsupported
from weightfoundry.tokenizer import (
    assemble_sequence,
    chunk_sequence,
    detokenize,
    layer_to_matrix,
    load_token_sequence,
    noise_view,
    save_token_sequence,
    tokenize_model,
)


def _record(shape, values, dtype="f64", name="t"):
    return TensorRecord(name, shape, dtype, np.asarray(values, dtype=np.float64))


class TestLayerToMatrix:
    def test_rank1_becomes_single_row(self):
        matrix = layer_to_matrix(_record((4,), [1, 2, 3, 4]))
        np.testing.assert_array_equal(matrix, [[1, 2, 3, 4]])

    def test_rank4_folds_trailing_dims(self):
        matrix = layer_to_matrix(_record((2, 3, 1, 1), [1, 2, 3, 4, 5, 6]))
        np.testing.assert_array_equal(matrix, [[1, 2, 3], [4, 5, 6]])

    def test_rank2_identity(self):
        matrix = layer_to_matrix(_record((2, 2), [1, 0, 0, 1]))
        np.testing.assert_array_equal(matrix, [[1, 0], [0, 1]])

    def test_rank3_folds(self):
        matrix = layer_to_matrix(_record((2, 2, 2), list(range(8))))
        np.testing.assert_array_equal(matrix, [[0, 1, 2, 3], [4, 5, 6, 7]])

    def test_scalar_becomes_1x1(self):
        np.testing.assert_array_equal(layer_to_matrix(_record((), [7.0])), [[7.0]])

    def test_rank5_unsupported(self):
        with pytest.raises(RankUnsupported):
            layer_to_matrix(_record((1, 1, 1, 1, 2), [1, 2]))


class TestTokenize:
    def test_2x6_matrix_dt4(self):
        tmap = TensorMap([_record((2, 6), np.arange(12.0))])
        seq = tokenize_model(tmap, 4)
        assert len(seq) == 4
        np.testing.assert_array_equal(seq.mask[1], [1, 1, 0, 0])
        np.testing.assert_array_equal(seq.tokens[1], [4, 5, 0, 0])
        np.testing.assert_array_equal(
            seq.positions, [(0, 0, 0), (1, 0, 1), (2, 0, 2), (3, 0, 3)]
        )
        seq.validate()

    def test_paper_token_width_single_token(self):
        tmap = TensorMap([_record((1, 230), np.arange(230.0))])
        seq = tokenize_model(tmap, 230)
        assert len(seq) == 1
        assert seq.mask.sum() == 230

    def test_two_layers_layer_index(self):
        tmap = TensorMap([
            _record((2,), [1, 2], name="a"),
            _record((2,), [3, 4], name="b"),
        ])
        seq = tokenize_model(tmap, 4)
        assert tuple(seq.positions[1]) == (1, 1, 0)

    def test_mask_counts_real_parameters(self):
        rng = np.random.default_rng(3)
        tmap = random_tensor_map(rng)
        seq = tokenize_model(tmap, 5)
        assert seq.num_real_values == tmap.num_params

    def test_requires_positive_dt_and_records(self):
        with pytest.raises(ValueError):
            tokenize_model(TensorMap([_record((2,), [1, 2])]), 0)
        with pytest.raises(ValueError):
            tokenize_model(TensorMap([]), 4)


class TestDetokenize:
    def test_round_trip_2x6(self):
        tmap = TensorMap([_record((2, 6), np.arange(12.0))])
        assert detokenize(tokenize_model(tmap, 4)) == tmap

    def test_padding_values_are_discarded(self):
        tmap = TensorMap([_record((2, 6), np.arange(12.0))])
        seq = tokenize_model(tmap, 4)
        seq.tokens[seq.mask == 0.0] = 99.0
        assert detokenize(seq) == tmap

    def test_layout_mismatch(self):
        seq = tokenize_model(TensorMap([_record((2, 6), np.arange(12.0))]), 4)
        seq.layout = seq.layout[:0]
        with pytest.raises(LayoutMismatch):
            detokenize(seq)

    def test_round_trip_random_architectures(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            tmap = random_tensor_map(rng, source_id="m")
            d_t = int(rng.integers(1, 65))
            assert detokenize(tokenize_model(tmap, d_t)) == tmap

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 32))
    def test_round_trip_property(self, map_seed, d_t):
        tmap = random_tensor_map(np.random.default_rng(map_seed), source_id="p")
        assert detokenize(tokenize_model(tmap, d_t)) == tmap


class TestChunking:
    def _seq(self, tokens=10, d_t=3):
        tmap = TensorMap([_record((tokens, d_t), np.arange(float(tokens * d_t)))])
        return tokenize_model(tmap, d_t)

    def test_ten_tokens_window_four(self):
        chunks = chunk_sequence(self._seq(10), 4)
        assert [c.window for c in chunks] == [4, 4, 4]
        assert [c.pad_rows for c in chunks] == [0, 0, 2]
        assert np.all(chunks[2].mask[2:] == 0.0)

    def test_window_at_least_sequence(self):
        chunks = chunk_sequence(self._seq(5), 16)
        assert len(chunks) == 1
        assert chunks[0].pad_rows == 11

    def test_reassembly_reproduces_sequence(self):
        seq = self._seq(10)
        chunks = chunk_sequence(seq, 4)
        rebuilt = assemble_sequence(chunks, seq.layout, seq.source_id, seq.scale)
        np.testing.assert_array_equal(rebuilt.tokens, seq.tokens)
        np.testing.assert_array_equal(rebuilt.mask, seq.mask)
        np.testing.assert_array_equal(rebuilt.positions, seq.positions)

    def test_mask_conservation(self):
        seq = self._seq(10)
        chunks = chunk_sequence(seq, 4)
        assert sum(c.mask.sum() for c in chunks) == seq.mask.sum()

    def test_position_multiset_preserved(self):
        seq = self._seq(10)
        chunks = chunk_sequence(seq, 3)
        collected = sorted(
            tuple(row) for c in chunks for row in c.positions[: c.window - c.pad_rows]
        )
        assert collected == sorted(tuple(row) for row in seq.positions)


class TestNoiseView:
    def _chunk(self):
        tmap = TensorMap([_record((3, 5), np.arange(15.0))])
        return chunk_sequence(tokenize_model(tmap, 4), 8)[0]

    def test_sigma_zero_is_identity(self):
        chunk = self._chunk()
        noised = noise_view(chunk, 0.0, seed=5)
        np.testing.assert_array_equal(noised.tokens, chunk.tokens)

    def test_deterministic_per_seed(self):
        chunk = self._chunk()
        a = noise_view(chunk, 0.1, seed=9)
        b = noise_view(chunk, 0.1, seed=9)
        np.testing.assert_array_equal(a.tokens, b.tokens)
        assert np.any(a.tokens != noise_view(chunk, 0.1, seed=10).tokens)

    def test_masked_entries_untouched(self):
        chunk = self._chunk()
        noised = noise_view(chunk, 0.5, seed=1)
        np.testing.assert_array_equal(
            noised.tokens[chunk.mask == 0.0], chunk.tokens[chunk.mask == 0.0]
        )
        np.testing.assert_array_equal(noised.mask, chunk.mask)
        np.testing.assert_array_equal(noised.positions, chunk.positions)

    def test_noise_scale_tracks_chunk_std(self):
        rng = np.random.default_rng(0)
        tmap = TensorMap([_record((200, 64), rng.normal(0, 3.0, size=200 * 64))])
        chunk = chunk_sequence(tokenize_model(tmap, 64), 200)[0]
        sigma = 0.05
        noised = noise_view(chunk, sigma, seed=123)
        delta = (noised.tokens - chunk.tokens)[chunk.mask == 1.0]
        assert delta.size >= 10_000
        expected = sigma * np.std(chunk.tokens[chunk.mask == 1.0])
        assert abs(np.std(delta) - expected) / expected < 0.05


def test_sequence_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(21)
    tmap = random_tensor_map(rng, source_id="serialize-me")
    seq = tokenize_model(tmap, 7)
    path = tmp_path / "tokens.safetensors"
    save_token_sequence(seq, path)
    loaded = load_token_sequence(path)
    np.testing.assert_array_equal(loaded.tokens, seq.tokens)
    np.testing.assert_array_equal(loaded.mask, seq.mask)
    np.testing.assert_array_equal(loaded.positions, seq.positions)
    assert loaded.layout == seq.layout
    assert loaded.source_id == seq.source_id
    assert loaded.scale == seq.scale
    assert detokenize(loaded) == tmap
