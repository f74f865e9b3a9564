"""Exact Gaussian-propagator solutions of linear vectorial Fokker-Planck Cauchy problems."""

__version__ = "0.1.0"

from .coefficients import (CoefficientSet, Constant, FpeCoefficients, Function,
                           IntegratedCoefficients, Poly, Table, TensorSchedule, VectorSchedule,
                           alphas, from_fpe, integrate_scalar, to_fpe, z_map)
from .propagator import (DiracDelta, GaussianMixture, GaussianState, GridSampled, HostFunction,
                         PropagatorKernel, RegularGrid, build_kernel, kernel_eval,
                         pde_residual, propagate_gaussian, solve, solve_quadrature)
from .specfile import ProblemSpec, dump_spec, load_spec, parse_spec
