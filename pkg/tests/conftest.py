import numpy as np
import pytest

from weightfoundry.autoencoder import AutoencoderConfig, init_weights
from weightfoundry.container import TensorMap, TensorRecord


def random_tensor_map(rng: np.random.Generator, source_id: str = "",
                      max_records: int = 6, allow_empty: bool = True,
                      dtypes: tuple[str, ...] = ("f32", "f64")) -> TensorMap:
    """Random architecture: mixed ranks 0-4, mixed dtypes, optional empty dims."""
    count = int(rng.integers(1, max_records + 1))
    records = []
    for i in range(count):
        rank = int(rng.integers(0, 5))
        shape = tuple(int(rng.integers(1, 5)) for _ in range(rank))
        if allow_empty and rank >= 1 and rng.random() < 0.1:
            axis = int(rng.integers(0, rank))
            shape = shape[:axis] + (0,) + shape[axis + 1 :]
        dtype = str(rng.choice(dtypes))
        size = int(np.prod(shape)) if shape else 1
        values = rng.normal(size=size)
        records.append(TensorRecord(f"layer{i:02d}.param", shape, dtype, values))
    return TensorMap(records, source_id=source_id)


@pytest.fixture
def tiny_config() -> AutoencoderConfig:
    """Smallest useful configuration: latent 8, one block, one head."""
    return AutoencoderConfig(
        d_t=4, latent_dim=8, proj_dim=4, num_layers_enc=1, num_layers_dec=1,
        num_heads=1, ff_dim=16, window=4, max_layer_index=7, max_k_index=15,
    )


@pytest.fixture
def tiny_weights(tiny_config):
    return init_weights(tiny_config, seed=0)
