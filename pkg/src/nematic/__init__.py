"""Q-tensor gradient flow, heat-semigroup diagnostics and correlation functions."""
from nematic.qtensor import ModelParams, TracelessSym3
from nematic.field import GridSpec, ScalarField, TensorField

__version__ = "0.1.0"

__all__ = ["GridSpec", "ModelParams", "ScalarField", "TensorField", "TracelessSym3", "__version__"]
