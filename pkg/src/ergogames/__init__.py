"""Analysis toolkit for zero-sum stochastic games with mean payoff.

Shapley operators and their ergodic equation ``g + T(u) = lambda*1 + u``,
ergodicity tests through slice spaces, bias-uniqueness scans under payment
perturbations, graph p-Laplacian Dirichlet problems, and stationary-strategy
simulation.
"""

__version__ = "0.1.0"

from .bias import (BiasProbe, LambdaConsistencyError, ScanResult,
                   UniquenessVerdict, bias_set_probe, cover_points_with_lines,
                   scan_plane, uniqueness_verdict)
from .core import (AxiomGaps, GameSpec, MaxOption, MinAction, QuotientPoint,
                   ShapleyOperator, builtin_operator, canonical_rep, evaluate,
                   game_from_dict, game_to_dict, hilbert_distance,
                   hilbert_seminorm, identity_operator, load_game,
                   log_action_operator, markov_chain_operator,
                   operator_axiom_gaps, operator_from_game,
                   polyhedral_example_game, polyhedral_example_operator,
                   save_game)
from .ergodicity import (BooleanRayWitness, ErgodicityReport,
                         PerturbationWitness, SliceQuery, SliceSearchResult,
                         boolean_ray_witness, ergodicity_verdict,
                         residual_seminorm, slice_escape_search,
                         slice_membership)
from .plaplace import (DescentNotConverged, PLaplacianProblem,
                       apply_plaplacian, dirichlet_solve, energy,
                       load_problem, path_graph_problem, problem_from_dict,
                       problem_to_dict, save_problem, sublevel_radius_probe)
from .sim import (SimReport, StationaryStrategyPair, extract_strategies,
                  induced_chain, policy_value_operator, simulate)
from .solvers import (ErgodicSolution, MeanPayoffEstimate, NotConverged,
                      SolveConfig, ValueTrace, mean_payoff_estimate,
                      solve_ergodic, value_iteration, verify_solution)

__all__ = [name for name in dir() if not name.startswith("_")]
