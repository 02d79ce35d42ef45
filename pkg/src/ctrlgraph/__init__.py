"""Path planning over a graph of local linear controllers with ellipsoidal invariant sets."""

from .controller import LocalController
from .errors import (A1Violated, A2Violated, A3Violated, DimensionError, EmptyGraph, EmptyGrid,
                     EmptySet, InfeasibleSample, NoEquilibrium, NoInteriorEquilibrium, NotPositiveDefinite,
                     NotStable, OutsideFreeSpace, PlannerError, ScenarioError, SolverFailure, Timeout,
                     Unbounded)
from .geometry import (Ellipsoid, Polytope, UnionOfPolytopes, chebyshev, ellipsoid_in_polytope,
                       intersection_interior_nonempty, normalize)
from .graph import (ControllerGraph, FreeSpaceGraph, build_free_space_graph, build_graph,
                    existence_check, sample_grid, shortest_path)
from .lti import (CostModel, Equilibrium, EquilibriumFamily, LTISystem, equilibrium_for_output,
                  is_schur, simulate, solve_dare, solve_discrete_lyapunov, zoh_discretize)
from .planner import PlanResult, baseline_lqr_run, evaluate_cost, execute
from .scaling import ScaledPISet, best_component_scale, max_scale_closed_form, max_scale_lp
from .scenario import Scenario, load_scenario, save_scenario, spacecraft_scenario
from .sdp import (SDPSynthesizer, SynthesisResult, synthesize_controller,
                  synthesize_pi_set_fixed_gain, verify_synthesis)

__version__ = "0.1.0"
