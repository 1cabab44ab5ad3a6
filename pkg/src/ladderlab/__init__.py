"""Klein-Gordon ladder spectra, Weyl-law counting and Liouville volumes on stationary spacetimes."""

from . import errors
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "errors", "__version__"]
