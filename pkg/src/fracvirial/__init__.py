"""Virial identities, ground states and blowup diagnostics for focusing fractional NLS."""

from .errors import FracVirialError
from .estimators import CollapseLawRegressor, FractionalLaplacianTransformer
from .evolve import EvolveConfig, RunLog, fit_collapse, monotonicity_report, run
from .fracops import FieldOnGrid, FracParams, Grid, energy, frac_laplacian, frac_seminorm
from .groundstate import check_blowup_criterion, solve_ground_state, thresholds

__version__ = "0.1.0"

__all__ = [
    "CollapseLawRegressor", "EvolveConfig", "FieldOnGrid", "FracParams", "FracVirialError",
    "FractionalLaplacianTransformer", "Grid", "RunLog", "check_blowup_criterion", "energy", "fit_collapse",
    "frac_laplacian", "frac_seminorm", "monotonicity_report", "run", "solve_ground_state", "thresholds",
]
