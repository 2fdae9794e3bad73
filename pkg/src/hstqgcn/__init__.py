"""Hybrid spatio-temporal quantum graph convolutional network for taxi destination prediction."""
from ._kernels import backend_name
from .config import ModelConfig

__version__ = "0.1.0"
__all__ = ["ModelConfig", "backend_name", "__version__"]
