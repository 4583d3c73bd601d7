"""
Causal and bicausal optimal transport on finite product spaces.

Computes G-Wasserstein distances between discrete measures that factorize
along a causal graph, together with treatment-effect bounds, structural
causal model perturbation bounds and displacement interpolation.
"""

import logging

from importlib.metadata import version, PackageNotFoundError

try:
    __version__ = version("causal-ot")
except PackageNotFoundError:
    __version__ = "0.0.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

from .config import SolverConfig
from .metric import CoordinateMetric, GroundCost
from .model import CoordinateSpace, Dag, DiscreteMeasure, Scm, validate_dag
from .solver import Solver
from .wasserstein import WassersteinManager
from .inference import AteSpec, InferenceManager
from .interpolation import InterpolationManager


class CausalOT:
    """Main entry point providing access to all managers over one solver."""

    def __init__(self, config=None):
        self._solver = Solver(config)
        self.distances = WassersteinManager(self._solver)
        self.inference = InferenceManager(self._solver, self.distances)
        self.interpolation = InterpolationManager(self._solver, self.distances)

    @property
    def solver(self):
        """Get the underlying solver engine."""
        return self._solver

    @property
    def config(self):
        return self._solver.config


__all__ = [
    'AteSpec',
    'CausalOT',
    'CoordinateMetric',
    'CoordinateSpace',
    'Dag',
    'DiscreteMeasure',
    'GroundCost',
    'Scm',
    'Solver',
    'SolverConfig',
    'validate_dag',
    '__version__',
]
