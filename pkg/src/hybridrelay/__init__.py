"""Robust hybrid analog/digital transceivers for multi-hop amplify-and-forward MIMO relays."""

from .channel import ChannelModelSpec, ChannelSet, HopChannel, draw_channel_set
from .designer import ALGORITHMS, DesignRequest, design
from .structopt import ObjectiveSpec
from .sysmodel import HybridDesign, NetworkConfig, evaluate, linear_mse, propagate

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ChannelModelSpec",
    "ChannelSet",
    "DesignRequest",
    "HopChannel",
    "HybridDesign",
    "NetworkConfig",
    "ObjectiveSpec",
    "design",
    "draw_channel_set",
    "evaluate",
    "linear_mse",
    "propagate",
    "__version__",
]
