"""Multi-task cosinor regression regularized by an optimal-transport task map."""

from .errors import (
    DegenerateFit,
    DivergedSolve,
    IngestError,
    InsufficientData,
    InvalidInput,
    NumericalFailure,
    PhysioMTLError,
)
from .rhythm import RhythmModel, TaskRecord, design_matrix, fit_rhythm, predict_rhythm, to_physio
from .ot import Coupling, cost_matrix, exact_ot_small, sinkhorn, wasserstein_1d
from .transport_map import FeatureScaler, KernelMap, LinearMap, apply_map, rbf_kernel_vector
from .trainer import FitConfig, PhysioMtlModel, fit, predict_unseen
from .synth import SynthConfig, generate_tasks

__version__ = "0.1.0"
