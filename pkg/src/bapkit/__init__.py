"""Block Arnoldi approximations of leading evolved-increment singular vectors.

Models (Lorenz96, 2-D shallow water), the explicit EIM oracle, block Arnoldi
perturbations and the growth diagnostics used to compare them.
"""

from .bap import (
    BapResult,
    PerturbationContext,
    bap,
    block_arnoldi,
    build_eim,
    chord_vectors,
    eif,
    eim_leading_sv,
    random_block,
    subspace_capture_ratio,
)
from .dynamics import LinearModel, ModelSpec, NormKind, n_steps, propagate, step_counter
from .errors import BapkitError
from .metrics import GrowthCurve, egr_curve, megr, regi, sample_states

__version__ = "0.1.0"

__all__ = [
    "BapResult",
    "BapkitError",
    "GrowthCurve",
    "LinearModel",
    "ModelSpec",
    "NormKind",
    "PerturbationContext",
    "bap",
    "block_arnoldi",
    "build_eim",
    "chord_vectors",
    "egr_curve",
    "eif",
    "eim_leading_sv",
    "megr",
    "n_steps",
    "propagate",
    "random_block",
    "regi",
    "sample_states",
    "step_counter",
    "subspace_capture_ratio",
]
