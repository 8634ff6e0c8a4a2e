"""From-scratch CNN: layers, Adam, plateau schedule, training and checkpoints."""
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    BatchNorm2D,
    Conv2D,
    Dense,
    Dropout,
    GlobalAveragePool,
    MaxPool2D,
    ReLU,
    cce_loss,
    cce_softmax_grad,
    conv2d_backward,
    conv2d_forward,
    one_hot,
    softmax,
)
from .model import MiniBackbone, Model, build_model, freeze_backbone, predict, replace_head, unfreeze
from .optim import AdamState, ReduceLROnPlateau, adam_step, reduce_lr_on_plateau
from .train import TrainConfig, TrainingCurves, evaluate_batch, stratified_split, train

__all__ = [
    "AdamState",
    "BatchNorm2D",
    "Conv2D",
    "Dense",
    "Dropout",
    "GlobalAveragePool",
    "MaxPool2D",
    "MiniBackbone",
    "Model",
    "ReLU",
    "ReduceLROnPlateau",
    "TrainConfig",
    "TrainingCurves",
    "adam_step",
    "build_model",
    "cce_loss",
    "cce_softmax_grad",
    "conv2d_backward",
    "conv2d_forward",
    "evaluate_batch",
    "freeze_backbone",
    "load_checkpoint",
    "one_hot",
    "predict",
    "reduce_lr_on_plateau",
    "replace_head",
    "save_checkpoint",
    "softmax",
    "stratified_split",
    "train",
    "unfreeze",
]
