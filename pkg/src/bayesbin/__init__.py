"""Document image binarization with Bayesian-optimized control parameters."""

from .imagecore import BinaryImage, GrayImage, load_image, save_image
from .metrics import MetricReport, evaluate_pair
from .pipeline import ParamVector, binarize

__all__ = [
    "BinaryImage",
    "GrayImage",
    "MetricReport",
    "ParamVector",
    "binarize",
    "evaluate_pair",
    "load_image",
    "save_image",
]

__version__ = "0.1.0"
