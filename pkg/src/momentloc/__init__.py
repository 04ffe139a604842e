"""Natural-language moment localization in segmented videos.

Candidate moments are contiguous segment spans; each is scored against the
query jointly with a latent temporal context moment, and the best-scoring
(moment, context) pair wins. Subpackages: autodiff (tape engine), temporal
(interval machinery), encoders, model, trainer, dataset (template + synthetic
generators with a brute-force oracle), evaluation, cli.
"""

__version__ = "0.1.0"

from .temporal import ContextMoment, Moment, context_set, enumerate_moments, iou
from .model import ModelBundle, ModelConfig, ScoredMoment, score

__all__ = [
    "ContextMoment",
    "Moment",
    "ModelBundle",
    "ModelConfig",
    "ScoredMoment",
    "__version__",
    "context_set",
    "enumerate_moments",
    "iou",
    "score",
]
