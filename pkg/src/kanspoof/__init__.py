"""Speech spoofing detection with Kolmogorov-Arnold projectors.

A small numpy autodiff engine (:mod:`kanspoof.tensor`), B-spline KAN and
group-rational KAN layers, a Conformer detector with a swappable
projector, countermeasure metrics, and a desk-scale experiment harness.
"""

from .errors import (
    CheckpointError,
    ContractError,
    DimensionError,
    FittingError,
    InitializationError,
    InputError,
    KanSpoofError,
    MetricError,
    ParseError,
    TrainingError,
)
from .grkan import GrKanLayer, RationalFn, fit_rational_to_function, load_from_mlp, variance_preserving_init
from .kan import KanLayer, KanStack, KnotGrid, kan_init
from .metrics import TdcfParams, TrialScores, compute_eer, compute_min_tdcf, det_curve
from .model import ConformerConfig, ModelConfig, ProjectorConfig, SsdModel
from .tensor import Tensor, grad_check, no_grad

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "FeatureExtractor",
    "SpoofDetector",
    "ConformerConfig",
    "ContractError",
    "DimensionError",
    "FittingError",
    "GrKanLayer",
    "InitializationError",
    "InputError",
    "KanLayer",
    "KanSpoofError",
    "KanStack",
    "KnotGrid",
    "MetricError",
    "ModelConfig",
    "ParseError",
    "ProjectorConfig",
    "RationalFn",
    "SsdModel",
    "TdcfParams",
    "Tensor",
    "TrainingError",
    "TrialScores",
    "compute_eer",
    "compute_min_tdcf",
    "det_curve",
    "fit_rational_to_function",
    "grad_check",
    "kan_init",
    "load_from_mlp",
    "no_grad",
    "variance_preserving_init",
]


def __getattr__(name):
    # the estimators pull in scikit-learn, so load them on first use
    if name in ("FeatureExtractor", "SpoofDetector"):
        from . import estimator

        return getattr(estimator, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
