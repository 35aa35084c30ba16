"""Minimal differentiable-network substrate for the spectrogram Cycle-GAN."""

from .checkpoint import load_container, load_network, save_container, save_network
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    Conv2d,
    ConvTranspose2d,
    InstanceNorm,
    Layer,
    LeakyReLU,
    ReLU,
    ResidualBlock,
    Sigmoid,
    Tanh,
    layer_from_spec,
)
from .network import Network, Tape, backward, forward
from .optim import OptimizerState, opt_step

__all__ = [
    "Conv2d", "ConvTranspose2d", "GradCheckReport", "InstanceNorm", "Layer", "LeakyReLU",
    "Network", "OptimizerState", "ReLU", "ResidualBlock", "Sigmoid", "Tanh", "Tape",
    "backward", "forward", "grad_check", "layer_from_spec", "load_container", "load_network",
    "opt_step", "save_container", "save_network",
]
