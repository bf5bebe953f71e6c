"""Population and subject-level estimation for mixed-effect ODE models.

Each subject's random effects are estimated through a linear-quadratic
tracking problem that lets a penalised control absorb model error; the
population parameters maximise an outer criterion with the measurement
variance profiled out.
"""

from .config import EstimationConfig
from .cv import forward_cv_score, select_U
from .data import SubjectData
from .errors import (
    ConfigurationError,
    IllConditioned,
    InputFileError,
    NonConvergence,
    NumericalError,
    OcnlmeError,
    ParseError,
    ValidationError,
)
from .grid import Mesh, build_mesh
from .inner import InnerSolution, estimate_subject
from .io import load_dataset, write_dataset
from .kernels import BACKEND
from .lq import LqSolution, PenaltyU, riccati_backward, solve_lq
from .models import BUILTIN_NAMES, LogLink, PseudoLinearModel, builtin_model
from .population import FitResult, GaussianLogPrior, LogPrior, evaluate_at, fit_population, outer_criterion
from .sdre import SdreConfig, solve_tracking
from .simulation import ScenarioSpec, builtin_scenario, run_monte_carlo, simulate_population
from .uncertainty import attach_variance, residual_control_report, sandwich_covariance

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BUILTIN_NAMES", "ConfigurationError", "EstimationConfig", "FitResult",
    "GaussianLogPrior", "IllConditioned", "InnerSolution", "InputFileError", "LogLink", "LogPrior",
    "LqSolution", "Mesh", "NonConvergence", "NumericalError", "OcnlmeError", "ParseError",
    "PenaltyU", "PseudoLinearModel", "ScenarioSpec", "SdreConfig", "SubjectData", "ValidationError",
    "attach_variance", "build_mesh", "builtin_model", "builtin_scenario", "estimate_subject",
    "evaluate_at", "fit_population", "forward_cv_score", "load_dataset", "outer_criterion", "residual_control_report",
    "riccati_backward", "run_monte_carlo", "sandwich_covariance", "select_U", "simulate_population",
    "solve_lq", "solve_tracking", "write_dataset",
]
