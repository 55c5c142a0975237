"""Weight-space learning toolkit.

Tokenizes neural-network checkpoints into masked token sequences, trains a
sequence autoencoder with a combined reconstruction + contrastive objective,
and generates new fine-tunable weights by sampling the learned latent space
around a prompt model.
"""

from .architecture import ArchInference, infer_architecture, load_retrieval_keywords
from .autoencoder import (
    AutoencoderConfig,
    AutoencoderWeights,
    LatentSequence,
    decode,
    encode,
    init_weights,
    load_weights,
    loss_and_grads,
    ntxent_loss,
    project,
    recon_loss,
    save_weights,
    total_loss,
)
from .collection import CollectionManifest, build_manifest
from .container import (
    TensorMap,
    TensorRecord,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
    write_checkpoint,
)
from .generation import (
    CandidateModel,
    KdeModel,
    ProbeSet,
    PromptEmbedding,
    autoencode,
    embed_prompt,
    fit_kde,
    generate,
    rank_candidates,
    sample_latents,
)
from .tokenizer import (
    LayerLayout,
    TokenChunk,
    TokenSequence,
    chunk_sequence,
    detokenize,
    layer_to_matrix,
    noise_view,
    tokenize_model,
)
from .training import (
    OptimizerState,
    TrainingConfig,
    TrainingHistory,
    adamw_step,
    onecycle_lr,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ArchInference",
    "AutoencoderConfig",
    "AutoencoderWeights",
    "CandidateModel",
    "CollectionManifest",
    "KdeModel",
    "LatentSequence",
    "LayerLayout",
    "ProbeSet",
    "PromptEmbedding",
    "TensorMap",
    "TensorRecord",
    "TokenChunk",
    "TokenSequence",
    "TrainingConfig",
    "TrainingHistory",
    "OptimizerState",
    "adamw_step",
    "autoencode",
    "build_manifest",
    "chunk_sequence",
    "decode",
    "detokenize",
    "embed_prompt",
    "encode",
    "fit_kde",
    "generate",
    "infer_architecture",
    "init_weights",
    "layer_to_matrix",
    "load_checkpoint",
    "load_retrieval_keywords",
    "load_weights",
    "loss_and_grads",
    "noise_view",
    "ntxent_loss",
    "onecycle_lr",
    "parse_checkpoint",
    "project",
    "rank_candidates",
    "recon_loss",
    "sample_latents",
    "save_checkpoint",
    "save_weights",
    "tokenize_model",
    "total_loss",
    "train",
    "write_checkpoint",
]
