"""File-level dependency graph of a Solidity project.

Edges point from importer to imported file.  Compilation roots are the files
nobody imports that declare a concrete contract; the closure of a root is
the source set the compiler needs.
"""

from __future__ import annotations

import fnmatch
import json
import logging
import os
import posixpath
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

from .errors import ResolutionError, ScanforgeError
from .frontend import ImportDirective, SourceFile, normalize_path, parse_source

log = logging.getLogger(__name__)

DEFAULT_IGNORE = (
    "node_modules",
    ".git",
    ".scanforge",
    "test",
    "tests",
    "mock",
    "mocks",
)

Remapping = tuple[str, str]


class RootsFallbackWarning(UserWarning):
    """No file qualifies as a compilation root; every contract file is used."""


class MissingExternal(NamedTuple):
    importer: str
    raw_path: str
    package: str
    subpath: str


class Resolved(NamedTuple):
    path: str


class External(NamedTuple):
    missing: MissingExternal


def split_package(path: str) -> tuple[str, str]:
    """``@scope/name/rest`` -> (``@scope/name``, ``rest``); ``name/rest`` -> (``name``, ``rest``)."""
    parts = path.split("/")
    n = 2 if parts[0].startswith("@") else 1
    return "/".join(parts[:n]), "/".join(parts[n:])


def apply_remappings(raw: str, remappings: Sequence[Remapping]) -> str | None:
    best = None
    for prefix, target in remappings:
        if raw.startswith(prefix) and (best is None or len(prefix) > len(best[0])):
            best = (prefix, target)
    if best is None:
        return None
    return best[1] + raw[len(best[0]):]


def resolve_import(
    importer: str,
    directive: ImportDirective | str,
    project_root: Union[str, os.PathLike],
    remappings: Sequence[Remapping] = (),
) -> Union[Resolved, External]:
    """Resolve one import of ``importer`` to a project file or a missing external.

    Relative paths are joined to the importer's directory; any other path is
    remapped (longest prefix wins) and then taken relative to the project root.
    """
    raw = directive.raw_path if isinstance(directive, ImportDirective) else directive
    root = Path(project_root)
    relative = raw.startswith("./") or raw.startswith("../")
    if relative:
        candidate = posixpath.join(posixpath.dirname(importer), raw)
    else:
        candidate = apply_remappings(raw, remappings) or raw
    try:
        target = normalize_path(candidate)
    except ValueError:
        raise ResolutionError(f"{importer}: import {raw!r} escapes the project root") from None
    if (root / target).is_file():
        return Resolved(target)
    if relative:
        # a local file that does not exist: no package to fetch it from
        return External(MissingExternal(importer, raw, "", target))
    package, subpath = split_package(raw)
    return External(MissingExternal(importer, raw, package, subpath))


@dataclass
class DependencyGraph:
    nodes: tuple[str, ...] = ()
    edges: tuple[tuple[str, str], ...] = ()
    missing: tuple[MissingExternal, ...] = ()
    files: Mapping[str, SourceFile] = field(default_factory=dict)
    errors: Mapping[str, str] = field(default_factory=dict)
    roots_fallback: bool = False

    def __post_init__(self):
        self.nodes = tuple(sorted(set(self.nodes)))
        self.edges = tuple(sorted(set(self.edges)))
        node_set = set(self.nodes)
        for a, b in self.edges:
            if a not in node_set or b not in node_set:
                raise ValueError(f"edge ({a}, {b}) has an endpoint outside the graph")
        self._children: dict[str, list[str]] = {n: [] for n in self.nodes}
        self._importers: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            self._children[a].append(b)
            self._importers[b].append(a)
        self._roots: list[str] | None = None

    def children(self, node: str) -> list[str]:
        return self._children[node]

    def importers(self, node: str) -> list[str]:
        return self._importers[node]

    @property
    def roots(self) -> list[str]:
        if self._roots is None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RootsFallbackWarning)
                self._roots = compilation_roots(self)
        return self._roots

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "missing": [m._asdict() for m in self.missing],
            "roots": self.roots,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_dot(self) -> str:
        roots = set(self.roots)
        lines = ["digraph dependencies {", "  rankdir=LR;"]
        for n in self.nodes:
            attrs = ' [shape=box, style=bold]' if n in roots else ""
            lines.append(f"  {json.dumps(n)}{attrs};")
        for a, b in self.edges:
            lines.append(f"  {json.dumps(a)} -> {json.dumps(b)};")
        for m in self.missing:
            label = m.package or m.subpath
            lines.append(f"  {json.dumps('missing:' + label)} [shape=note, color=red];")
            lines.append(f"  {json.dumps(m.importer)} -> {json.dumps('missing:' + label)} [style=dashed];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _ignored(rel: str, ignore: Iterable[str]) -> bool:
    parts = rel.split("/")
    for pattern in ignore:
        if any(fnmatch.fnmatch(p, pattern) for p in parts[:-1]) or fnmatch.fnmatch(rel, pattern):
            return True
    return False


def scan_sources(project_root: Union[str, os.PathLike], ignore: Iterable[str] = DEFAULT_IGNORE) -> list[str]:
    root = Path(project_root)
    if not root.is_dir():
        raise OSError(f"not a readable directory: {root}")
    ignore = tuple(ignore)
    found = []
    for dirpath, dirnames, filenames in os.walk(root, onerror=_raise):
        rel_dir = Path(dirpath).relative_to(root).as_posix()
        dirnames[:] = sorted(
            d for d in dirnames
            if not _ignored(posixpath.normpath(posixpath.join(rel_dir, d, "x")), ignore)
        )
        for name in filenames:
            if name.endswith(".sol"):
                rel = normalize_path(posixpath.join(rel_dir, name))
                if not _ignored(rel, ignore):
                    found.append(rel)
    return sorted(found)


def _raise(exc: OSError):
    raise exc


def build_graph(
    project_root: Union[str, os.PathLike],
    remappings: Sequence[Remapping] = (),
    ignore: Iterable[str] = DEFAULT_IGNORE,
) -> DependencyGraph:
    """Scan ``project_root`` and link every ``.sol`` file to its imports.

    Files reached only through imports (vendored libraries, remapped
    directories) are pulled in even when they live in an ignored directory.
    Per-file decode/lexical errors land in ``graph.errors``.
    """
    root = Path(project_root)
    pending = scan_sources(root, ignore)
    files: dict[str, SourceFile] = {}
    errors: dict[str, str] = {}
    edges: set[tuple[str, str]] = set()
    missing: list[MissingExternal] = []
    seen = set(pending)
    pending.reverse()
    while pending:
        rel = pending.pop()
        try:
            sf = parse_source(rel, (root / rel).read_bytes())
        except ScanforgeError as exc:
            log.warning("skipping %s: %s", rel, exc)
            errors[rel] = str(exc)
            continue
        files[rel] = sf
        for directive in sf.imports:
            try:
                res = resolve_import(rel, directive, root, remappings)
            except ResolutionError as exc:
                errors.setdefault(rel, str(exc))
                continue
            if isinstance(res, External):
                missing.append(res.missing)
                continue
            edges.add((rel, res.path))
            if res.path not in seen:
                seen.add(res.path)
                pending.append(res.path)
    # edges into files that failed to parse still need their endpoint as a node
    nodes = set(files) | {b for _, b in edges}
    missing.sort(key=lambda m: (m.importer, m.raw_path))
    return DependencyGraph(nodes=tuple(nodes), edges=tuple(edges), missing=tuple(missing),
                           files=files, errors=dict(sorted(errors.items())))


def compilation_roots(graph: DependencyGraph) -> list[str]:
    """Unimported files that declare a deployable contract.

    When that set is empty on a non-empty graph (e.g. the whole project is one
    import cycle) every contract-declaring file is returned instead and a
    :class:`RootsFallbackWarning` is emitted.
    """
    def deployable(n):
        # nodes without parsed source (synthetic graphs) count as deployable
        if n in graph.errors:
            return False
        sf = graph.files.get(n)
        return sf is None or sf.deployable

    roots = [n for n in graph.nodes if not graph.importers(n) and deployable(n)]
    graph.roots_fallback = False
    if not roots and graph.nodes:
        roots = [n for n in graph.nodes if deployable(n)]
        graph.roots_fallback = True
        warnings.warn(
            f"no unimported contract file; falling back to {len(roots)} contract files",
            RootsFallbackWarning,
            stacklevel=2,
        )
    return roots


def closure(graph: DependencyGraph, root: str) -> list[str]:
    """``root`` plus everything it transitively imports, depth-first pre-order."""
    if root not in graph._children:
        raise ValueError(f"{root!r} is not a node of the graph")
    order = []
    visited = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if node in visited:
            continue
        visited.add(node)
        order.append(node)
        stack.extend(reversed(graph.children(node)))
    return order


def orphans(graph: DependencyGraph) -> list[str]:
    """Nodes not reachable from any compilation root."""
    covered = set()
    for r in graph.roots:
        covered.update(closure(graph, r))
    return [n for n in graph.nodes if n not in covered]


def read_remappings(path: Union[str, os.PathLike]) -> list[Remapping]:
    """Parse a solc-style ``prefix=target`` remappings file (missing file -> [])."""
    p = Path(path)
    if not p.is_file():
        return []
    out = []
    for line in p.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        prefix, target = line.split("=", 1)
        out.append((prefix.split(":")[-1], target))
    return out


def project_remappings(project_root: Union[str, os.PathLike]) -> list[Remapping]:
    """Remappings declared by the project plus those written by vendoring."""
    root = Path(project_root)
    merged = dict(read_remappings(root / "remappings.txt"))
    merged.update(read_remappings(root / ".scanforge" / "remappings.txt"))
    return sorted(merged.items())
