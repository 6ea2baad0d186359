"""Variance-reduced Halpern iterations for stochastic monotone inclusions."""

from .estimators import InvalidParameter
from .oracle import (ContractViolation, DegenerateInput, FiniteSumOracle, GaussianOracle,
                     OracleSpec, StochasticOracle, UnsupportedCheck)
from .problems import (Ball, Box, FullSpace, Halfspace, ProblemInstance, identity_problem,
                       bilinear_problem, make_linear_problem, make_rls_problem,
                       make_synthetic_rls)
from .solvers import (BaselineConfig, CocoerciveConfig, DivergenceError, MonotoneConfig,
                      RunTrace, ScheduleCollapse, SharpConfig, e_halpern,
                      halpern_cocoercive, halpern_cocoercive_constrained,
                      halpern_cocoercive_minibatch, restarted_e_halpern, run_baseline)

__version__ = "0.1.0"
