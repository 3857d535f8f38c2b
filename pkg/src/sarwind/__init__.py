"""Rain-aware SAR wind toolkit.

Forward/inverse CMOD5.N wind modelling, rain-balanced patch dataset
construction with leakage-free splitting, stratified evaluation against
model and in-situ references, and a synthetic-scene oracle that ties the
pieces together end to end.
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
