"""Optimal transport with submodular edge-set costs.

The transport cost of a coupling is the Lovasz extension of a submodular
function on the edges between source and target points. The package solves
``min over couplings of f(gamma)`` as a saddle point against the base
polytope of ``F`` and reports an optimality gap with every solution.
"""
from .exceptions import InputError, NotCertifiedWarning
from .kernels import BACKEND, available_backends
from .measures import (CostMatrix, Coupling, DiscreteMeasure, EdgeIndex, GroupStructure,
                       build_cost, check_coupling, product_coupling, round_to_polytope,
                       uniform_measure)
from .submodular import (BlackBox, ConcaveFn, ConcaveOfSum, Decomposable, DualPoint, Modular,
                         SubmodularCost, check_submodular, greedy_vertex, group_cost, lovasz,
                         membership_violation)
from .projections import (BaseProjector, SinkhornConfig, kl_project, mnp_fujishige_wolfe,
                          project_base, project_base_concave_of_sum, sfm_concave_of_sum)
from .solvers import (SolveResult, SolverConfig, entropic_ot, exact_ot_lp, saddle_gap, solve,
                      solve_mda, solve_spmd, solve_spmp)
from .harness import (SyntheticSpec, adapt_and_score, class_groups, generate, knn_groups,
                      ngram_groups, sot_distance, structured_cost)

__version__ = "0.1.0"
