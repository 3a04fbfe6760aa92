"""Hybridized discontinuous Galerkin solver for the Dirichlet Poisson problem,
stabilized with local lifting operators, with static condensation onto the
mesh skeleton."""

__version__ = "0.1.0"

from .analysis import (
    CASES,
    DiscretePair,
    ErrorTable,
    ExactSolution,
    best_fit,
    energy_error,
    energy_norms,
    get_case,
    h1_broken_error,
    l2_error,
    norm_equivalence_constant,
    rates,
)
from .basis import edge_basis, element_basis, gauss_rule
from .forms import Discretization, local_system
from .mesh import Mesh, build_uniform_rect, mesh_metrics
from .system import assemble, condense, solve, solve_full

__all__ = [
    "CASES",
    "DiscretePair",
    "Discretization",
    "ErrorTable",
    "ExactSolution",
    "Mesh",
    "assemble",
    "best_fit",
    "build_uniform_rect",
    "condense",
    "edge_basis",
    "element_basis",
    "energy_error",
    "energy_norms",
    "gauss_rule",
    "get_case",
    "h1_broken_error",
    "l2_error",
    "local_system",
    "mesh_metrics",
    "norm_equivalence_constant",
    "rates",
    "solve",
    "solve_full",
]
