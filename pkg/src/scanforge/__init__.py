"""scanforge: compile multi-file Solidity projects and benchmark SWC detectors."""

__version__ = "0.1.0"

from .versions import Version, VersionConstraint, parse_constraint, intersect_all  # noqa: E402
from .frontend import SourceFile, ImportDirective, scrub, parse_source  # noqa: E402
from .depgraph import DependencyGraph, build_graph, closure, compilation_roots, resolve_import  # noqa: E402

__all__ = [
    "Version",
    "VersionConstraint",
    "parse_constraint",
    "intersect_all",
    "SourceFile",
    "ImportDirective",
    "scrub",
    "parse_source",
    "DependencyGraph",
    "build_graph",
    "closure",
    "compilation_roots",
    "resolve_import",
]
