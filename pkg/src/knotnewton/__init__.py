"""Block Newton solvers for one-dimensional shallow ReLU networks."""

from .analysis import contraction_factor, error_norms, fixed_point_jacobian, spd_check, theorem_condition
from .assembly import AssembledSystem, assemble
from .model import Interval, Network, canonicalize, derivative, evaluate, uniform_network
from .problems import Problem, ProblemKind, catalog, problem_from_config
from .quadrature import QuadratureSpec
from .solver import Damping, Scheme, SolverConfig, SolverError, classify, linear_solve, run, step

__version__ = "0.1.0"
