"""Neural vector fields trained on Fourier-estimated gradient flows."""
from .accel import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
