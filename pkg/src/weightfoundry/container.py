"""Binary checkpoint container: parse and write named tensor payloads.

Layout: bytes 0-7 hold a little-endian u64 header length H, bytes 8..8+H a
UTF-8 JSON object mapping tensor name -> {"dtype", "shape", "data_offsets"},
and the rest is one contiguous little-endian row-major data buffer. Offsets
are relative to byte 8+H. An optional "__metadata__" key carries
string-to-string annotations.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MalformedHeader, OffsetOverlap, UnsupportedDtype

# on-disk dtype tag -> numpy little-endian dtype
_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_FILE_TAGS = {"f32": "F32", "f64": "F64"}
_FROM_FILE_TAGS = {v: k for k, v in _FILE_TAGS.items()}

METADATA_KEY = "__metadata__"


@dataclass(frozen=True)
class TensorRecord:
    """One named, shaped, typed parameter array."""

    name: str
    shape: tuple[int, ...]
    dtype: str
    values: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise ValueError("tensor name must be non-empty")
        if self.dtype not in _DTYPES:
            raise UnsupportedDtype(f"dtype {self.dtype!r} not in {sorted(_DTYPES)}")
        shape = tuple(int(s) for s in self.shape)
        if any(s < 0 for s in shape):
            raise ValueError(f"negative extent in shape {shape}")
        values = np.ascontiguousarray(self.values, dtype=_DTYPES[self.dtype]).reshape(-1)
        if values.size != math.prod(shape):
            raise ValueError(
                f"{self.name}: {values.size} values for shape {shape}"
            )
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", values)

    @property
    def num_params(self) -> int:
        return int(self.values.size)

    def astype(self, dtype: str) -> "TensorRecord":
        return TensorRecord(self.name, self.shape, dtype, self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorRecord):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.dtype == other.dtype
            and self.values.tobytes() == other.values.tobytes()
        )


@dataclass
class TensorMap:
    """Ordered collection of records for one checkpoint.

    Iteration order is canonical (lexicographic by name) regardless of the
    order records were supplied in.
    """

    records: list[TensorRecord]
    source_id: str = ""
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        names = [r.name for r in self.records]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate tensor names: {dupes}")
        self.records = sorted(self.records, key=lambda r: r.name)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, name: str) -> TensorRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(r.name == name for r in self.records)

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.records]

    @property
    def num_params(self) -> int:
        return sum(r.num_params for r in self.records)

    def shape_signature(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(r.name, r.shape) for r in self.records]

    def replace_values(self, arrays: dict[str, np.ndarray]) -> "TensorMap":
        """New map with the same names/shapes/dtypes but substituted values."""
        out = []
        for r in self.records:
            vals = arrays.get(r.name, r.values)
            out.append(TensorRecord(r.name, r.shape, r.dtype, vals))
        return TensorMap(out, source_id=self.source_id, metadata=dict(self.metadata))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorMap):
            return NotImplemented
        return (
            self.source_id == other.source_id
            and self.records == other.records
        )


def parse_checkpoint(data: bytes) -> TensorMap:
    """Decode a container byte sequence into a TensorMap.

    Never reads outside ``data``: every offset is bounds-checked before any
    slice is taken, so arbitrary byte strings fail with a domain error
    rather than a crash.
    """
    if len(data) < 8:
        raise MalformedHeader(f"buffer of {len(data)} bytes cannot hold a header length")
    (header_len,) = struct.unpack_from("<Q", data, 0)
    if 8 + header_len > len(data):
        raise MalformedHeader(
            f"declared header length {header_len} exceeds buffer of {len(data)} bytes"
        )
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"header is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeader(f"header must be a JSON object, got {type(header).__name__}")

    metadata = {}
    raw_meta = header.pop(METADATA_KEY, None)
    if raw_meta is not None:
        if not isinstance(raw_meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in raw_meta.items()
        ):
            raise MalformedHeader("__metadata__ must map strings to strings")
        metadata = dict(raw_meta)

    buf_len = len(data) - 8 - header_len
    entries = []
    for name, info in header.items():
        if not name:
            raise MalformedHeader("empty tensor name")
        if not isinstance(info, dict):
            raise MalformedHeader(f"entry {name!r} is not an object")
        tag = info.get("dtype")
        if not isinstance(tag, str):
            raise MalformedHeader(f"{name}: missing dtype")
        if tag not in _FROM_FILE_TAGS:
            raise UnsupportedDtype(f"{name}: dtype {tag!r}")
        dtype = _FROM_FILE_TAGS[tag]
        shape = info.get("shape")
        if not isinstance(shape, list) or not all(
            isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in shape
        ):
            raise MalformedHeader(f"{name}: shape {shape!r} is not a list of sizes")
        offsets = info.get("data_offsets")
        if (
            not isinstance(offsets, list)
            or len(offsets) != 2
            or not all(isinstance(o, int) and not isinstance(o, bool) and o >= 0 for o in offsets)
        ):
            raise MalformedHeader(f"{name}: bad data_offsets {offsets!r}")
        begin, end = offsets
        if end < begin:
            raise MalformedHeader(f"{name}: data_offsets end {end} before begin {begin}")
        expected = math.prod(shape) * _DTYPES[dtype].itemsize
        if end - begin != expected:
            raise MalformedHeader(
                f"{name}: region of {end - begin} bytes for shape {shape} ({expected} expected)"
            )
        if end > buf_len:
            raise OffsetOverlap(f"{name}: region [{begin}, {end}) exceeds {buf_len}-byte buffer")
        entries.append((name, dtype, tuple(shape), begin, end))

    occupied = sorted((e for e in entries if e[4] > e[3]), key=lambda e: e[3])
    for prev, cur in zip(occupied, occupied[1:]):
        if cur[3] < prev[4]:
            raise OffsetOverlap(
                f"{cur[0]} region [{cur[3]}, {cur[4]}) overlaps {prev[0]} ending at {prev[4]}"
            )

    base = 8 + header_len
    records = []
    for name, dtype, shape, begin, end in entries:
        raw = np.frombuffer(data, dtype=_DTYPES[dtype], count=math.prod(shape), offset=base + begin)
        records.append(TensorRecord(name, shape, dtype, raw.copy()))
    return TensorMap(records, source_id=metadata.get("source_id", ""), metadata=metadata)


def write_checkpoint(tensor_map: TensorMap) -> bytes:
    """Serialize a TensorMap; deterministic, parse(write(m)) == m bit-exactly."""
    header: dict[str, object] = {}
    metadata = dict(tensor_map.metadata)
    if tensor_map.source_id and "source_id" not in metadata:
        metadata["source_id"] = tensor_map.source_id
    if metadata:
        header[METADATA_KEY] = metadata

    chunks = []
    cursor = 0
    for record in tensor_map.records:
        payload = record.values.astype(_DTYPES[record.dtype], copy=False).tobytes()
        header[record.name] = {
            "dtype": _FILE_TAGS[record.dtype],
            "shape": list(record.shape),
            "data_offsets": [cursor, cursor + len(payload)],
        }
        chunks.append(payload)
        cursor += len(payload)

    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<Q", len(header_bytes)) + header_bytes + b"".join(chunks)


def load_checkpoint(path: str | Path) -> TensorMap:
    tensor_map = parse_checkpoint(Path(path).read_bytes())
    if not tensor_map.source_id:
        tensor_map.source_id = Path(path).stem
    return tensor_map


def save_checkpoint(tensor_map: TensorMap, path: str | Path) -> None:
    Path(path).write_bytes(write_checkpoint(tensor_map))
