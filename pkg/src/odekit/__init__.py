"""Build, solve, simulate and fit compartmental ODE models."""
from .common_models import SEIR, SIR, get_model, seir, sir, sir_birth_death, sir_population, sis_vector_host
from .confidence import IntervalResult, ci_asymptotic, ci_bootstrap, ci_profile
from .distributions import Distribution, rbeta, rgamma, rlnorm, rnorm, rpois, runif
from .epi import DiseaseSplit, dfe, next_generation, r0
from .errors import (DomainError, EstimationError, ExprSyntaxError, IntegrationError,
                     MissingBindingError, ModelError, OdekitError, SchemaError, SimulationError,
                     SingularMatrixError, UnknownSymbolError, UnrollAmbiguityError)
from .expr import SymbolTable, canonical_equal, differentiate, evaluate, parse, to_latex, to_string
from .integrate import SolverConfig, Trajectory, integrate
from .io import load_model, save_model, read_observations
from .loss import FitResult, NormalLoss, PoissonLoss, SquareLoss, fit
from .model import OdeModel, Transition, TransitionType, add_birth_death, unroll
from .stochastic import simulate_jump, simulate_param

__version__ = "0.1.0"
