"""Multilevel Monte Carlo for stochastic reaction networks, with a pathwise
importance-sampling change of measure that repairs catastrophic coupling."""

__version__ = "0.1.0"

from .network import (  # noqa: E402
    ModelSpec,
    Observable,
    ReactionNetwork,
    apply_firings,
    load_model,
    observe,
    propensities,
    save_model,
    sensitive_set,
)

__all__ = [
    "ModelSpec",
    "Observable",
    "ReactionNetwork",
    "apply_firings",
    "load_model",
    "observe",
    "propensities",
    "save_model",
    "sensitive_set",
    "__version__",
]
