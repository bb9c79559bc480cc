"""Small reverse-mode differentiation engine, layers and optimizer."""
from . import tensor as ops
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import MLP, LayerNorm, Linear, Module
from .optim import Adam, OneCycleSchedule, accumulated_step
from .tensor import Parameter, Tape, Tensor

__all__ = [
    "Adam", "LayerNorm", "Linear", "MLP", "Module", "OneCycleSchedule", "Parameter",
    "Tape", "Tensor", "accumulated_step", "load_checkpoint", "ops", "save_checkpoint",
]
