"""Multi-task kernel smoothing manifold models for tasks with very few samples each."""

from .mt_ksmm import (
    GeneralModel,
    MTConfig,
    MTFitState,
    MultiTaskDataset,
    TaskModelStack,
    TransferMode,
    fit_new_task,
    general_decode,
    train,
)
from .numerics import BasisConfig, Schedule

__all__ = [
    "BasisConfig",
    "Schedule",
    "GeneralModel",
    "MTConfig",
    "MTFitState",
    "MultiTaskDataset",
    "TaskModelStack",
    "TransferMode",
    "fit_new_task",
    "general_decode",
    "train",
]
__version__ = "0.1.0"
