"""Spatiotemporal propagation learning for network-wide flight delay prediction."""

__version__ = "0.1.0"

from .config import ModelConfig
from .model import STPN

__all__ = ["ModelConfig", "STPN", "__version__"]
