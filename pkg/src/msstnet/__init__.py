"""Multi-scale CNN + temporal Transformer video classifier on a numpy autodiff core."""

from .analysis import count_flops, dump_maps, flops_scaling
from .config import RunConfig, load_config, parse_config
from .metrics import ConfusionMatrix, confusion, uar, war
from .model import ModelConfig, MSSTNet, desk_config, tiny_config
from .training import TrainSchedule, evaluate, make_synthetic_dataset, shuffle_frames, train

__all__ = [
    "ConfusionMatrix",
    "MSSTNet",
    "ModelConfig",
    "RunConfig",
    "TrainSchedule",
    "confusion",
    "count_flops",
    "desk_config",
    "dump_maps",
    "evaluate",
    "flops_scaling",
    "load_config",
    "make_synthetic_dataset",
    "parse_config",
    "shuffle_frames",
    "tiny_config",
    "train",
    "uar",
    "war",
]
