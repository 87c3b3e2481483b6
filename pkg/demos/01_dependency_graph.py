"""Walk a small Solidity project: imports, roots and the closure of each root.

Run from the repository root:  python3 demos/01_dependency_graph.py
"""
import warnings
from pathlib import Path

from scanforge import build_graph, closure, compilation_roots, parse_constraint

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "projects"

# A diamond: A imports B and C, both of which import D.
graph = build_graph(FIXTURES / "diamond")
print("nodes:", list(graph.nodes))
print("edges:", [f"{a} -> {b}" for a, b in graph.edges])

# Only A is unimported, so it is the single compilation root.  Its closure is
# a depth-first pre-order that visits the shared D once.
for root in compilation_roots(graph):
    print(f"closure({root}):", closure(graph, root))

# When every file is imported by another one there is no natural root.  The
# whole cycle is then offered as roots, with a warning.
with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    cyclic = build_graph(FIXTURES / "cycle")
    print("cycle roots:", compilation_roots(cyclic), "| warning:", caught[0].message)

# Imports that point outside the project are kept as missing externals,
# split into package name and subpath for the registry to fill in later.
for m in build_graph(FIXTURES / "missing_external").missing:
    print(f"missing: {m.package} / {m.subpath}  (imported by {m.importer})")

# Pragmas become half-open version intervals.
for text in ["^0.8.0", ">=0.6.0 <0.8.0", "~0.5.3", "0.7.x"]:
    lo, hi = parse_constraint(text).interval()
    print(f"{text:>16}  ->  [{lo}, {hi})")
