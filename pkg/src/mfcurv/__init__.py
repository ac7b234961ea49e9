"""Entropic curvature toolkit for nonlinear Markov dynamics on finite
state spaces: gradient-flow structure, discrete transport distance,
curvature bounds and the functional inequalities they imply."""

from .backend import BACKEND
from .simplex import (StateSpace, ProbabilityMeasure, Potential,
                      TangentVector, EdgeField, gradient, divergence,
                      vertex_inner, edge_inner)
from .logmean import (log_mean, log_mean_partials, dissipation_kernel,
                      three_point_check, three_point_slack)
from .models import (NonlinearMarkovTriple, ModelSpec, ModelError,
                     build_mean_field_pair, build_separable, build_linear,
                     build_tabulated, curie_weiss, two_point_linear,
                     complete_uniform, load_model, validate)
from .dynamics import (Trajectory, StationarySet, IntegrationError,
                       StationaryError, rhs, free_energy, free_energy_gap,
                       fisher_info, integrate, find_stationary,
                       dissipation_residual)
from .metric import (TransportPath, ContinuityError, DistanceError,
                     edge_weights, action, solve_continuity, distance,
                     geodesic)
from .curvature import (QuadraticForm, CurvatureReport, SeparableBound,
                        assemble_A, assemble_B, hessian_terms, kappa_at,
                        kappa_opt, two_point_kappa, separable_bound)
from .inequalities import (CheckReport, dirichlet_sampler, check_mlsi,
                           check_et, check_fwi, check_decay,
                           check_contraction, check_evi)

__version__ = "0.1.0"
