"""Large normally hyperbolic cylinders near partial resonances: construction and certificates."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
