"""Exception hierarchy for the weightfoundry toolkit."""


class WeightFoundryError(Exception):
    """Base class for all domain errors raised by this package."""


# --- checkpoint container ---

class MalformedHeader(WeightFoundryError):
    """Container header could not be parsed."""


class OffsetOverlap(WeightFoundryError):
    """Tensor data regions overlap each other or exceed the buffer."""


class UnsupportedDtype(WeightFoundryError):
    """Container declares a dtype outside the supported set."""


class AllInputsFailed(WeightFoundryError):
    """No input file could be parsed while building a manifest."""


# --- tokenizer ---

class RankUnsupported(WeightFoundryError):
    """Tensor rank has no defined 2-D flattening rule."""


class LayoutMismatch(WeightFoundryError):
    """Token count disagrees with the stored layout."""


# --- autoencoder / losses ---

class ShapeMismatch(WeightFoundryError):
    """Array shapes are inconsistent with the configuration."""


class AllMasked(WeightFoundryError):
    """Every row of the input is padding; nothing to pool."""


class EmptyMask(WeightFoundryError):
    """Mask has no unmasked entries; loss undefined."""


class SinglePair(WeightFoundryError):
    """Contrastive loss needs at least two pairs to form negatives."""


class NonFiniteGradient(WeightFoundryError):
    """Backward pass produced a NaN or infinite gradient."""


# --- training ---

class NonFiniteUpdate(WeightFoundryError):
    """Optimizer step produced a NaN or infinite parameter."""


class StepOutOfRange(WeightFoundryError):
    """Schedule queried outside [0, total_steps)."""


class DivergedLoss(WeightFoundryError):
    """Training loss became non-finite."""


class EmptyDataset(WeightFoundryError):
    """Training requires at least one token sequence."""


# --- generation ---

class EmptyEmbedding(WeightFoundryError):
    """KDE fit requires at least one unmasked latent."""


class EmptyProbe(WeightFoundryError):
    """Candidate ranking requires a non-empty probe set."""


# --- zoo / evaluation ---

class TaskDegenerate(WeightFoundryError):
    """Toy task parameters produce inseparable data."""


class EmptyInput(WeightFoundryError):
    """Operation received an empty collection."""
