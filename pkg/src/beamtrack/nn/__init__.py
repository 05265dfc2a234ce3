"""Minimal numpy neural-network engine used by the beam estimators and tracker."""

from .gradcheck import max_relative_error, numerical_gradient
from .layers import BatchNorm, Dense, Dropout, Layer, Sequential, dense_block, glorot_uniform
from .losses import log_softmax, softmax, sparse_xent_loss
from .lstm import LSTMCell, lstm_step, sigmoid
from .optim import Optimizer, OptimizerConfig, optimizer_step
from .serialization import load_weights, save_weights

__all__ = [
    "BatchNorm",
    "Dense",
    "Dropout",
    "LSTMCell",
    "Layer",
    "Optimizer",
    "OptimizerConfig",
    "Sequential",
    "dense_block",
    "glorot_uniform",
    "load_weights",
    "log_softmax",
    "lstm_step",
    "max_relative_error",
    "numerical_gradient",
    "optimizer_step",
    "save_weights",
    "sigmoid",
    "softmax",
    "sparse_xent_loss",
]
