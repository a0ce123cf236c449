"""Hybrid quantum-classical states, dynamics, candidates and diagnostics."""

from .candidates import (
    Candidate,
    collapse_map,
    default_width,
    initial_state,
    make_candidate,
    residual_norm,
    smoothed_candidate,
)
from .diagnostics import (
    event_probability,
    hybrid_matrix,
    hybrid_purity_defect,
    min_eigenvalue,
    node_of,
    reduce_cm,
    reduce_qm,
    spectrum,
    von_neumann_entropy,
)
from .dynamics import (
    evolve_hybrid_dyads,
    evolve_hybrid_grid,
    grid_state_to_dense,
    hybrid_rhs,
    hybrid_rhs_tensor,
    stability_rate,
)
from .states import DyadTerm, HamiltonianSpec, HybridDyadState, HybridGridState

__all__ = [
    "Candidate", "DyadTerm", "HamiltonianSpec", "HybridDyadState", "HybridGridState",
    "collapse_map", "default_width", "event_probability", "evolve_hybrid_dyads",
    "evolve_hybrid_grid", "grid_state_to_dense", "hybrid_matrix", "hybrid_purity_defect",
    "hybrid_rhs", "hybrid_rhs_tensor", "initial_state", "make_candidate", "min_eigenvalue",
    "node_of", "reduce_cm", "reduce_qm", "residual_norm", "smoothed_candidate", "spectrum",
    "stability_rate", "von_neumann_entropy",
]
