"""Automatic IQ tuning of a simulated four-block ISP pipeline.

Per-block reference images are generated from simulated bursts (temporal
fusion, clean/noisy pairs, an edge-steered unsharp mask) and the pipeline's
abstracted parameters are tuned by a two-stage gradient-free search: a global
artificial bee colony refined by subspace simplex descent.
"""

from .imaging import BayerMosaic, BayerPattern, ColorDomain, Kernel2D, PlanarImage
from .isp import BlockId, BlockParams, PipelineTuning, run_pipeline
from .optim import OptimConfig, OptimResult, ParamSpec, abc_optimize, nelder_mead, subplex, two_stage
from .refgen import Burst, NoiseModel, SceneSpec, SharpenRefConfig
from .tuner import SessionConfig, TuningLadder, tune_ladder, tune_pipeline

__version__ = "0.1.0"

__all__ = [
    "BayerMosaic", "BayerPattern", "ColorDomain", "Kernel2D", "PlanarImage",
    "BlockId", "BlockParams", "PipelineTuning", "run_pipeline",
    "OptimConfig", "OptimResult", "ParamSpec",
    "abc_optimize", "nelder_mead", "subplex", "two_stage",
    "Burst", "NoiseModel", "SceneSpec", "SharpenRefConfig",
    "SessionConfig", "TuningLadder", "tune_ladder", "tune_pipeline",
    "__version__",
]
