"""Multi-world causal graph engine.

Stores causal variables with per-world instantiations, finds causal
blankets and cross-world matchings to generate grounded counterfactual
queries, answers them with a step-by-step abduction/intervention/prediction
pipeline over pluggable reasoners, and exposes the result through a CLI and
an HTTP what-if service.
"""

from .graph import (
    CausalRelation,
    CausalVariable,
    WorldAssignment,
    WorldGraph,
    load_graph,
    save_graph,
)

__all__ = [
    "CausalRelation",
    "CausalVariable",
    "WorldAssignment",
    "WorldGraph",
    "load_graph",
    "save_graph",
]

__version__ = "0.1.0"
