"""Lorentz equivariant collaborative filtering over a knowledge graph."""

from .errors import DataError, DegenerateInputError, DomainError, LecfError, NumericalError, UsageError
from .manifold import LorentzMap, lorentz_distance, lorentz_inner, make_boost, make_rotation, project_to_hyperboloid
from .model import LecfModel, TrainConfig

__version__ = "0.1.0"
