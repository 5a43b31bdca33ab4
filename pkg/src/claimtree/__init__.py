"""Organize related scientific studies into labeled concept hierarchies,
collect expert corrections over three sub-tasks, and evaluate or repair the
generated trees."""

from .core import (
    CategoryNode,
    Claim,
    Hierarchy,
    Provenance,
    ReviewSet,
    Study,
    depth,
    path_to_root,
    validate,
)

__all__ = [
    "CategoryNode",
    "Claim",
    "Hierarchy",
    "Provenance",
    "ReviewSet",
    "Study",
    "depth",
    "path_to_root",
    "validate",
]

__version__ = "0.1.0"
