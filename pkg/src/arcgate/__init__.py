"""Adaptive arctangent-gated activation family and its desk-scale toolkit."""

from .core import (ArcGateParams, GateEval, GateGrad, eval_F, eval_F_batch,
                   eval_u, eval_v, grad, positive_map, positive_map_grad,
                   preset, raw_from_effective)
from .engine import (MLPModel, ModelSpec, TrainConfig, evaluate, load_model,
                     save_model, train)
from .fitter import FitResult, FitTarget, fit, replicate_classics
from .idx import Dataset, load_idx, synthesize_arrays
from .zoo import ActivationKind, act, act_grad

__version__ = "0.1.0"

__all__ = [
    "ActivationKind", "ArcGateParams", "Dataset", "FitResult", "FitTarget",
    "GateEval", "GateGrad", "MLPModel", "ModelSpec", "TrainConfig",
    "act", "act_grad", "eval_F", "eval_F_batch", "eval_u", "eval_v",
    "evaluate", "fit", "grad", "load_idx", "load_model", "positive_map",
    "positive_map_grad", "preset", "raw_from_effective", "replicate_classics",
    "save_model", "synthesize_arrays", "train", "__version__",
]
