"""Infer backbone family and input modality from raw checkpoint structure.

No config files are consulted: the rules look only at tensor names and
shapes, with filename tokens as a last resort for the sensing modality.
The rule table is ordered and every hit is recorded as (rule_id, matched
key) evidence so a classification can be audited.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

from .container import TensorMap

FAMILIES = ("vit", "swin", "resnet", "unet", "mobilenet", "mlp", "yolo_like", "unknown")
MODALITIES = ("rgb", "multispectral", "sar", "unknown")

# filename tokens -> modality hint (last-resort rule, per-token match)
_SAR_TOKENS = frozenset({"sar", "s1", "sentinel1", "radar"})
_MS_TOKENS = frozenset({"s2", "sentinel2", "multispectral", "landsat", "hyperspectral", "modis"})
_RGB_TOKENS = frozenset({"rgb"})


@dataclass
class ArchInference:
    family: str = "unknown"
    in_channels: int | None = None
    embed_dim: int | None = None
    modality_hint: str = "unknown"
    evidence: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.modality_hint not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality_hint!r}")
        if self.family == "vit" and self.embed_dim is None:
            raise ValueError("vit inference requires embed_dim")


def _rule_patch_embed(tmap: TensorMap) -> ArchInference | None:
    """Patch-embedding conv [E, C, ph, pw] pins a transformer backbone."""
    for record in tmap:
        if "patch_embed" in record.name and len(record.shape) == 4:
            embed_dim, in_channels = record.shape[0], record.shape[1]
            family = "vit"
            evidence = [("patch_embed_4d", record.name)]
            for other in tmap:
                if "relative_position" in other.name:
                    family = "swin"
                    evidence.append(("relative_position_bias", other.name))
                    break
            return ArchInference(family, in_channels, embed_dim, "unknown", evidence)
    return None


def _rule_stem_conv(tmap: TensorMap) -> ArchInference | None:
    """7x7 stem convolution [O, C, 7, 7] identifies a ResNet-style CNN."""
    for record in tmap:
        if len(record.shape) == 4 and record.shape[2] == record.shape[3] == 7:
            return ArchInference(
                "resnet", record.shape[1], None, "unknown", [("stem_conv_7x7", record.name)]
            )
    return None


def _rule_mobilenet(tmap: TensorMap) -> ArchInference | None:
    """Depthwise convolutions [O, 1, k, k] with a 3x3 stem mark MobileNet-style nets."""
    depthwise = None
    stem = None
    for record in tmap:
        if len(record.shape) != 4:
            continue
        if record.shape[1] == 1 and record.shape[2] == record.shape[3] >= 3 and record.shape[0] > 1:
            depthwise = depthwise or record
        elif record.shape[2] == record.shape[3] == 3 and record.shape[1] > 1 and stem is None:
            stem = record
    if depthwise is not None and stem is not None:
        return ArchInference(
            "mobilenet",
            stem.shape[1],
            None,
            "unknown",
            [("depthwise_conv", depthwise.name), ("stem_conv_3x3", stem.name)],
        )
    return None


_ENC_PAT = re.compile(r"(^|[._])(enc|encoder|down)")
_DEC_PAT = re.compile(r"(^|[._])(dec|decoder|up)")


def _rule_unet(tmap: TensorMap) -> ArchInference | None:
    """Paired encoder/decoder conv blocks mark a UNet."""
    enc = next((r for r in tmap if len(r.shape) == 4 and _ENC_PAT.search(r.name)), None)
    dec = next((r for r in tmap if len(r.shape) == 4 and _DEC_PAT.search(r.name)), None)
    if enc is not None and dec is not None:
        return ArchInference(
            "unet", enc.shape[1], None, "unknown",
            [("encoder_conv", enc.name), ("decoder_conv", dec.name)],
        )
    return None


def _rule_mlp(tmap: TensorMap) -> ArchInference | None:
    """All tensors of rank <= 2 with at least one matrix: a plain perceptron."""
    if len(tmap) == 0:
        return None
    matrices = [r for r in tmap if len(r.shape) == 2]
    if matrices and all(len(r.shape) <= 2 for r in tmap):
        first = min(matrices, key=lambda r: r.name)
        return ArchInference(
            "mlp", first.shape[1], None, "unknown", [("all_rank_le_2", first.name)]
        )
    return None


# ordered structural rule table; first hit wins
STRUCTURAL_RULES = (
    ("patch_embed_4d", _rule_patch_embed),
    ("stem_conv_7x7", _rule_stem_conv),
    ("mobilenet_depthwise", _rule_mobilenet),
    ("unet_enc_dec", _rule_unet),
    ("all_rank_le_2", _rule_mlp),
)


def _filename_tokens(filename: str) -> list[str]:
    return [t for t in re.split(r"[^0-9a-z]+", filename.lower()) if t]


def _modality_from_channels(in_channels: int | None) -> str:
    if in_channels is None:
        return "unknown"
    if in_channels == 3:
        return "rgb"
    if in_channels in (1, 2):
        return "sar"
    if in_channels >= 4:
        return "multispectral"
    return "unknown"


def infer_architecture(tmap: TensorMap, filename: str = "") -> ArchInference:
    """Classify one checkpoint. Pure function of (tensor map, filename)."""
    result = None
    for _, rule in STRUCTURAL_RULES:
        result = rule(tmap)
        if result is not None:
            break
    if result is None:
        result = ArchInference()
        tokens = _filename_tokens(filename)
        if "yolo" in tokens or any(t.startswith("yolov") for t in tokens):
            matched = next(t for t in tokens if t.startswith("yolo"))
            result.family = "yolo_like"
            result.evidence.append(("filename_yolo", matched))

    if result.in_channels is not None:
        modality = _modality_from_channels(result.in_channels)
        if modality != "unknown":
            result.modality_hint = modality
            result.evidence.append(("channel_count", str(result.in_channels)))

    if result.modality_hint == "unknown" and filename:
        for token in _filename_tokens(filename):
            if token in _SAR_TOKENS:
                result.modality_hint = "sar"
            elif token in _MS_TOKENS:
                result.modality_hint = "multispectral"
            elif token in _RGB_TOKENS:
                result.modality_hint = "rgb"
            else:
                continue
            result.evidence.append(("filename_token", token))
            break
    return result


def load_retrieval_keywords() -> list[str]:
    """Keyword vocabulary used for hub retrieval, one keyword per line."""
    text = resources.files("weightfoundry.data").joinpath("retrieval_keywords.txt").read_text("utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]
