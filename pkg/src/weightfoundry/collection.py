"""Build a manifest over a directory of checkpoint files."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .architecture import ArchInference, infer_architecture
from .container import TensorMap, load_checkpoint
from .errors import AllInputsFailed, WeightFoundryError

logger = logging.getLogger(__name__)


@dataclass
class ManifestEntry:
    source_id: str
    path: str
    inference: ArchInference
    parameter_count: int


@dataclass
class CollectionManifest:
    entries: list[ManifestEntry]
    created_at: float
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def to_json(self) -> str:
        """Manifest file format: a JSON array of entry objects.

        created_at and the skip records are runtime metadata (skips are
        logged when the manifest is built) and are not persisted.
        """
        payload = [
            {
                "source_id": e.source_id,
                "path": e.path,
                "family": e.inference.family,
                "in_channels": e.inference.in_channels,
                "embed_dim": e.inference.embed_dim,
                "modality_hint": e.inference.modality_hint,
                "evidence": [list(pair) for pair in e.inference.evidence],
                "parameter_count": e.parameter_count,
            }
            for e in self.entries
        ]
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CollectionManifest":
        payload = json.loads(text)
        entries = [
            ManifestEntry(
                source_id=e["source_id"],
                path=e["path"],
                inference=ArchInference(
                    family=e["family"],
                    in_channels=e["in_channels"],
                    embed_dim=e["embed_dim"],
                    modality_hint=e["modality_hint"],
                    evidence=[tuple(pair) for pair in e["evidence"]],
                ),
                parameter_count=e["parameter_count"],
            )
            for e in payload
        ]
        return cls(entries, created_at=0.0)


def build_manifest(paths: list[str | Path]) -> CollectionManifest:
    """Parse each checkpoint, infer its architecture, and collect statistics.

    Corrupted files are skipped with a logged reason; raises AllInputsFailed
    when nothing parses. Entries come back sorted by source_id.
    """
    entries = []
    skipped = []
    for path in paths:
        path = Path(path)
        try:
            tmap = load_checkpoint(path)
        except (WeightFoundryError, OSError, ValueError) as exc:
            reason = f"{type(exc).__name__}: {exc}"
            logger.warning("skipping %s (%s)", path, reason)
            skipped.append((str(path), reason))
            continue
        entries.append(
            ManifestEntry(
                source_id=tmap.source_id,
                path=str(path),
                inference=infer_architecture(tmap, path.name),
                parameter_count=tmap.num_params,
            )
        )
    if not entries:
        raise AllInputsFailed(f"none of the {len(paths)} inputs parsed")
    entries.sort(key=lambda e: e.source_id)
    return CollectionManifest(entries, created_at=time.time(), skipped=skipped)


def load_manifest_checkpoints(manifest: CollectionManifest) -> list[TensorMap]:
    """Load every checkpoint listed in the manifest, in manifest order."""
    return [load_checkpoint(e.path) for e in manifest.entries]
