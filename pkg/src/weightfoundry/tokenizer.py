"""Convert model weights to and from token sequences, exactly invertibly.

Each tensor is flattened row-major into a 2-D matrix, every matrix row is
zero-padded to a multiple of the token width and split into tokens, and a
binary mask separates real parameters from padding. Tokens carry integer
position triples (n, l, k): global index, layer index, and within-layer
index. Layout records make de-tokenization exact.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .container import TensorMap, TensorRecord, load_checkpoint, save_checkpoint
from .errors import LayoutMismatch, RankUnsupported

logger = logging.getLogger(__name__)

RESERVED_TOKENS = "__tokens__"
RESERVED_MASK = "__mask__"
RESERVED_POSITIONS = "__positions__"


@dataclass(frozen=True)
class LayerLayout:
    """Bookkeeping needed to reverse one layer's tokenization."""

    name: str
    original_shape: tuple[int, ...]
    dtype: str
    matrix_rows: int
    matrix_cols: int
    first_token_index: int
    tokens_per_row: int

    @property
    def token_count(self) -> int:
        return self.matrix_rows * self.tokens_per_row


@dataclass
class TokenSequence:
    """Token matrix plus mask, positions, and the layout to invert it."""

    tokens: np.ndarray          # [N, d_t] float64
    mask: np.ndarray            # [N, d_t] float64 in {0, 1}
    positions: np.ndarray       # [N, 3] int64 rows (n, l, k)
    layout: list[LayerLayout]
    d_t: int
    source_id: str = ""
    scale: float = 1.0          # std of the unmasked values, 1.0 if degenerate

    def __len__(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def num_real_values(self) -> int:
        return int(round(float(self.mask.sum())))

    def validate(self) -> None:
        n = len(self)
        if self.tokens.shape != (n, self.d_t) or self.mask.shape != (n, self.d_t):
            raise LayoutMismatch("tokens and mask must both be [N, d_t]")
        if self.positions.shape != (n, 3):
            raise LayoutMismatch("positions must be [N, 3]")
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise ValueError("mask entries must be 0 or 1")
        if np.any(self.tokens[self.mask == 0.0] != 0.0):
            raise ValueError("padding positions must hold zeros at creation")
        if not np.array_equal(self.positions[:, 0], np.arange(n)):
            raise ValueError("global indices n must run 0..N-1")
        lk = {(int(l), int(k)) for l, k in self.positions[:, 1:]}
        if len(lk) != n:
            raise ValueError("(l, k) pairs must be unique")
        declared = sum(math.prod(ll.original_shape) for ll in self.layout)
        if self.num_real_values != declared:
            raise ValueError("mask count disagrees with layout shapes")


@dataclass
class TokenChunk:
    """Fixed-length training window cut from a TokenSequence."""

    tokens: np.ndarray          # [window, d_t]
    mask: np.ndarray
    positions: np.ndarray       # [window, 3]
    pad_rows: int
    model_id: str
    chunk_index: int = 0
    scale: float = 1.0

    @property
    def window(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def d_t(self) -> int:
        return int(self.tokens.shape[1])

    def copy(self) -> "TokenChunk":
        return replace(
            self,
            tokens=self.tokens.copy(),
            mask=self.mask.copy(),
            positions=self.positions.copy(),
        )


def layer_to_matrix(record: TensorRecord) -> np.ndarray:
    """Flatten one tensor row-major into a 2-D float64 matrix.

    Rank 1 becomes a single row; rank 3 and 4 keep their leading extent as
    rows and fold the rest into columns. Scalars become [1, 1].
    """
    rank = len(record.shape)
    if rank > 4:
        raise RankUnsupported(f"{record.name}: rank {rank} has no flattening rule")
    rows, cols = _matrix_dims(record.shape)
    return record.values.astype(np.float64).reshape(rows, cols)


def _matrix_dims(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 0:
        return 1, 1
    if len(shape) == 1:
        return 1, shape[0]
    return shape[0], math.prod(shape[1:])


def matrix_to_layer(matrix: np.ndarray, layout: LayerLayout) -> TensorRecord:
    """Inverse of layer_to_matrix given the original shape and dtype."""
    return TensorRecord(
        layout.name,
        layout.original_shape,
        layout.dtype,
        matrix.reshape(-1).astype(_np_dtype(layout.dtype)),
    )


def _np_dtype(tag: str) -> np.dtype:
    return np.dtype(np.float32 if tag == "f32" else np.float64)


def tokenize_model(tmap: TensorMap, d_t: int) -> TokenSequence:
    """Slice a model's weights into mask-annotated tokens of width d_t."""
    if d_t < 1:
        raise ValueError(f"d_t must be >= 1, got {d_t}")
    if len(tmap) == 0:
        raise ValueError("cannot tokenize an empty tensor map")

    token_blocks, mask_blocks, pos_blocks, layouts = [], [], [], []
    base = 0
    for l, record in enumerate(tmap):
        matrix = layer_to_matrix(record)
        rows, cols = matrix.shape
        tokens_per_row = math.ceil(cols / d_t) if cols else 0
        layouts.append(
            LayerLayout(record.name, record.shape, record.dtype, rows, cols, base, tokens_per_row)
        )
        count = rows * tokens_per_row
        if count == 0:
            continue
        padded = np.zeros((rows, tokens_per_row * d_t), dtype=np.float64)
        padded[:, :cols] = matrix
        mask = np.zeros_like(padded)
        mask[:, :cols] = 1.0
        token_blocks.append(padded.reshape(count, d_t))
        mask_blocks.append(mask.reshape(count, d_t))
        pos = np.empty((count, 3), dtype=np.int64)
        pos[:, 0] = base + np.arange(count)
        pos[:, 1] = l
        pos[:, 2] = np.arange(count)
        pos_blocks.append(pos)
        base += count

    if token_blocks:
        tokens = np.concatenate(token_blocks)
        mask = np.concatenate(mask_blocks)
        positions = np.concatenate(pos_blocks)
    else:
        tokens = np.zeros((0, d_t), dtype=np.float64)
        mask = np.zeros((0, d_t), dtype=np.float64)
        positions = np.zeros((0, 3), dtype=np.int64)

    scale = _value_scale(tokens[mask == 1.0])
    return TokenSequence(tokens, mask, positions, layouts, d_t, tmap.source_id, scale)


def _value_scale(values: np.ndarray) -> float:
    if values.size == 0:
        return 1.0
    scale = float(np.std(values))
    if not np.isfinite(scale) or scale == 0.0:
        logger.warning("degenerate value scale (std=%r); using 1.0", scale)
        return 1.0
    return scale


def detokenize(seq: TokenSequence) -> TensorMap:
    """Invert tokenize_model; padding positions are discarded via the mask."""
    expected = sum(ll.token_count for ll in seq.layout)
    if expected != len(seq):
        raise LayoutMismatch(f"layout declares {expected} tokens, sequence has {len(seq)}")
    records = []
    for ll in seq.layout:
        block = seq.tokens[ll.first_token_index : ll.first_token_index + ll.token_count]
        padded = block.reshape(ll.matrix_rows, ll.tokens_per_row * seq.d_t) if ll.token_count else \
            np.zeros((ll.matrix_rows, 0), dtype=np.float64)
        records.append(matrix_to_layer(padded[:, : ll.matrix_cols], ll))
    return TensorMap(records, source_id=seq.source_id)


def chunk_sequence(seq: TokenSequence, window: int) -> list[TokenChunk]:
    """Cut a sequence into consecutive non-overlapping windows.

    The last chunk is zero-padded with mask-0 rows; positions of real rows
    are carried through unchanged.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    chunks = []
    for index, start in enumerate(range(0, len(seq), window)):
        stop = min(start + window, len(seq))
        real = stop - start
        tokens = np.zeros((window, seq.d_t), dtype=np.float64)
        mask = np.zeros((window, seq.d_t), dtype=np.float64)
        positions = np.zeros((window, 3), dtype=np.int64)
        tokens[:real] = seq.tokens[start:stop]
        mask[:real] = seq.mask[start:stop]
        positions[:real] = seq.positions[start:stop]
        chunks.append(
            TokenChunk(tokens, mask, positions, window - real, seq.source_id, index, seq.scale)
        )
    return chunks


def assemble_sequence(chunks: list[TokenChunk], layout: list[LayerLayout],
                      source_id: str = "", scale: float = 1.0) -> TokenSequence:
    """Undo chunk_sequence: concatenate chunks in order, dropping pad rows."""
    if not chunks:
        raise ValueError("cannot assemble an empty chunk list")
    parts_t, parts_m, parts_p = [], [], []
    for chunk in sorted(chunks, key=lambda c: c.chunk_index):
        real = chunk.window - chunk.pad_rows
        parts_t.append(chunk.tokens[:real])
        parts_m.append(chunk.mask[:real])
        parts_p.append(chunk.positions[:real])
    tokens = np.concatenate(parts_t)
    mask = np.concatenate(parts_m)
    positions = np.concatenate(parts_p)
    return TokenSequence(tokens, mask, positions, list(layout), chunks[0].d_t,
                         source_id, scale)


def noise_view(chunk: TokenChunk, sigma: float, seed: int) -> TokenChunk:
    """Second contrastive view: Gaussian noise on unmasked entries only.

    Noise std is sigma times the std of the chunk's own unmasked values, so
    the augmentation strength tracks each chunk's weight magnitudes.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    out = chunk.copy()
    if sigma == 0.0:
        return out
    unmasked = chunk.tokens[chunk.mask == 1.0]
    if unmasked.size == 0:
        return out
    level = sigma * float(np.std(unmasked))
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, size=chunk.tokens.shape)
    out.tokens = np.where(chunk.mask == 1.0, chunk.tokens + level * noise, chunk.tokens)
    return out


def save_token_sequence(seq: TokenSequence, path: str | Path) -> None:
    """Persist a sequence as a container plus a JSON layout sidecar."""
    path = Path(path)
    records = [
        TensorRecord(RESERVED_TOKENS, seq.tokens.shape, "f64", seq.tokens.reshape(-1)),
        TensorRecord(RESERVED_MASK, seq.mask.shape, "f64", seq.mask.reshape(-1)),
        TensorRecord(RESERVED_POSITIONS, seq.positions.shape, "f64",
                     seq.positions.astype(np.float64).reshape(-1)),
    ]
    save_checkpoint(TensorMap(records, source_id=seq.source_id), path)
    sidecar = {
        "d_t": seq.d_t,
        "source_id": seq.source_id,
        "scale": seq.scale,
        "layout": [
            {
                "name": ll.name,
                "original_shape": list(ll.original_shape),
                "dtype": ll.dtype,
                "matrix_rows": ll.matrix_rows,
                "matrix_cols": ll.matrix_cols,
                "first_token_index": ll.first_token_index,
                "tokens_per_row": ll.tokens_per_row,
            }
            for ll in seq.layout
        ],
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_token_sequence(path: str | Path) -> TokenSequence:
    tmap = load_checkpoint(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    layout = [
        LayerLayout(
            name=ll["name"],
            original_shape=tuple(ll["original_shape"]),
            dtype=ll["dtype"],
            matrix_rows=ll["matrix_rows"],
            matrix_cols=ll["matrix_cols"],
            first_token_index=ll["first_token_index"],
            tokens_per_row=ll["tokens_per_row"],
        )
        for ll in sidecar["layout"]
    ]
    n = tmap[RESERVED_TOKENS].shape[0]
    d_t = sidecar["d_t"]
    return TokenSequence(
        tokens=tmap[RESERVED_TOKENS].values.reshape(n, d_t),
        mask=tmap[RESERVED_MASK].values.reshape(n, d_t),
        positions=tmap[RESERVED_POSITIONS].values.reshape(n, 3).astype(np.int64),
        layout=layout,
        d_t=d_t,
        source_id=sidecar["source_id"],
        scale=sidecar["scale"],
    )
