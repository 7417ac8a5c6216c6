"""Edge-attention unrolled reconstruction for parallel MRI, on a from-scratch autodiff core."""
from .config import ReconConfig
from .recon import EamriModel, build_variant, model_forward

__version__ = "0.1.0"

__all__ = ["EamriModel", "ReconConfig", "build_variant", "model_forward"]
