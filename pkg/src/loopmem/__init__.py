"""Desk-scale decoder-only transformer with adaptive per-layer looping and
gated local/global memory banks, on a minimal deterministic autodiff engine."""

from .config import ConfigError, ModelConfig, RunConfig, TrainConfig
from .gradcheck import GradCheckReport, grad_check
from .model import (ForwardResult, ModelParams, adaptive_loop_forward, block_forward,
                    expected_steps, gated_integrate, halting_distribution,
                    halting_probability, init_params, memory_retrieve, model_forward)
from .tensor import Graph, GraphStateError, ShapeError, Tensor
from .training import (StepMetrics, TrainState, adamw_step, cosine_lr, init_train_state,
                       load_checkpoint, ponder_loss, save_checkpoint, train_run, train_step)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ModelConfig", "RunConfig", "TrainConfig",
    "GradCheckReport", "grad_check",
    "ForwardResult", "ModelParams", "adaptive_loop_forward", "block_forward",
    "expected_steps", "gated_integrate", "halting_distribution",
    "halting_probability", "init_params", "memory_retrieve", "model_forward",
    "Graph", "GraphStateError", "ShapeError", "Tensor",
    "StepMetrics", "TrainState", "adamw_step", "cosine_lr", "init_train_state",
    "load_checkpoint", "ponder_loss", "save_checkpoint", "train_run", "train_step",
    "__version__",
]
