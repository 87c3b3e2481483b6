"""Offline registry of external Solidity packages and vendoring into projects.

Layout on disk::

    <root>/registry.json
    <root>/<package>/<version>/<subpath...>.sol

Vendoring copies one package version to ``<project>/.scanforge/lib/<package>/``
and hands back a remapping so imports resolve without touching the sources.
"""

from __future__ import annotations

import contextlib
import json
import logging
import os
import shutil
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

try:
    import fcntl
except ImportError:  # pragma: no cover - non-POSIX
    fcntl = None

from .depgraph import Remapping, build_graph, project_remappings
from .errors import RegistryConflict, ResolutionError, VendorConflict
from .frontend import normalize_path, parse_source
from .versions import UNCONSTRAINED, Version, VersionConstraint, intersect_all, parse_constraint

log = logging.getLogger(__name__)

MANIFEST = "registry.json"
VENDOR_DIR = ".scanforge/lib"
REMAPPINGS_FILE = ".scanforge/remappings.txt"

PathLike = Union[str, os.PathLike]


@contextlib.contextmanager
def locked(directory: PathLike) -> Iterator[None]:
    """Advisory exclusive lock on ``directory`` (no-op where flock is missing)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / ".lock", "w") as fh:
        if fcntl is not None:
            fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            if fcntl is not None:
                fcntl.flock(fh, fcntl.LOCK_UN)


@dataclass(frozen=True)
class PackageVersion:
    package: str
    version: Version
    files: tuple[str, ...]
    pragma_range: VersionConstraint = UNCONSTRAINED

    def __post_init__(self):
        if not self.files:
            raise ValueError(f"{self.package}@{self.version}: no files")

    def to_dict(self) -> dict:
        return {
            "package": self.package,
            "version": str(self.version),
            "files": list(self.files),
            "pragma_range": str(self.pragma_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PackageVersion":
        return cls(
            package=d["package"],
            version=Version.parse(d["version"]),
            files=tuple(sorted(d["files"])),
            pragma_range=parse_constraint(d.get("pragma_range") or "*"),
        )


@dataclass
class Registry:
    root_dir: Path
    manifest: list[PackageVersion] = field(default_factory=list)

    @classmethod
    def open(cls, root_dir: PathLike) -> "Registry":
        root = Path(root_dir)
        path = root / MANIFEST
        entries = []
        if path.is_file():
            doc = json.loads(path.read_text())
            entries = [PackageVersion.from_dict(d) for d in doc.get("packages", [])]
        reg = cls(root, entries)
        reg.check()
        return reg

    def check(self) -> None:
        seen = set()
        for e in self.manifest:
            key = (e.package, e.version)
            if key in seen:
                raise RegistryConflict(f"duplicate manifest entry {e.package}@{e.version}")
            seen.add(key)
            for sub in e.files:
                if not (self.package_dir(e) / sub).is_file():
                    raise RegistryConflict(f"{e.package}@{e.version}: {sub} missing on disk")

    def package_dir(self, entry: PackageVersion) -> Path:
        return self.root_dir / entry.package / str(entry.version)

    def versions(self, package: str) -> list[PackageVersion]:
        return sorted((e for e in self.manifest if e.package == package), key=lambda e: e.version)

    def packages(self) -> list[str]:
        return sorted({e.package for e in self.manifest})

    def save(self) -> None:
        entries = sorted(self.manifest, key=lambda e: (e.package, e.version))
        doc = {"packages": [e.to_dict() for e in entries]}
        self.root_dir.mkdir(parents=True, exist_ok=True)
        (self.root_dir / MANIFEST).write_text(json.dumps(doc, indent=2) + "\n")


def package_pragma_range(sources: Iterable[bytes]) -> VersionConstraint:
    constraints = []
    for data in sources:
        constraints.extend(parse_source("x.sol", data).pragmas)
    return intersect_all(constraints)


def registry_add(registry: Registry, package: str, version: str | Version, source_dir: PathLike) -> PackageVersion:
    """Copy the ``.sol`` files of ``source_dir`` into the registry as ``package@version``."""
    version = version if isinstance(version, Version) else Version.parse(version)
    src = Path(source_dir)
    subpaths = sorted(p.relative_to(src).as_posix() for p in src.rglob("*.sol") if p.is_file())
    if not subpaths:
        raise ValueError(f"{src} contains no .sol files")
    with locked(registry.root_dir):
        if any(e.package == package and e.version == version for e in registry.manifest):
            raise RegistryConflict(f"{package}@{version} is already registered")
        entry = PackageVersion(
            package=package,
            version=version,
            files=tuple(subpaths),
            pragma_range=package_pragma_range((src / s).read_bytes() for s in subpaths),
        )
        dest = registry.package_dir(entry)
        for sub in subpaths:
            target = dest / sub
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(src / sub, target)
        registry.manifest.append(entry)
        registry.save()
    return entry


def select_version(
    registry: Registry,
    package: str,
    project_constraint: VersionConstraint,
    needed_subpaths: Iterable[str],
) -> PackageVersion:
    """Highest version that has every needed file and a compatible pragma range."""
    needed = set(needed_subpaths)
    candidates = registry.versions(package)
    if not candidates:
        raise ResolutionError(f"package {package} is not in the registry")
    ok, near = [], []
    for e in candidates:
        has_files = needed <= set(e.files)
        compatible = e.pragma_range.intersects(project_constraint)
        if has_files and compatible:
            ok.append(e)
        elif has_files:
            near.append(f"{e.version} (pragma {e.pragma_range} vs {project_constraint})")
        elif compatible:
            lacking = sorted(needed - set(e.files))
            near.append(f"{e.version} (lacks {', '.join(lacking[:3])})")
    if not ok:
        hint = "; near misses: " + ", ".join(near) if near else ""
        raise ResolutionError(f"no version of {package} satisfies the project{hint}")
    return max(ok, key=lambda e: e.version)


def vendor(
    registry: Registry,
    selection: PackageVersion,
    project_root: PathLike,
    force: bool = False,
) -> tuple[list[str], list[Remapping]]:
    """Copy ``selection`` into the project; return written paths and remappings.

    Re-vendoring identical content writes nothing.  Differing content already
    in place is a :class:`VendorConflict` unless ``force`` is set.
    """
    project = Path(project_root)
    base = f"{VENDOR_DIR}/{selection.package}"
    src_dir = registry.package_dir(selection)
    plan = []
    conflicts = []
    for sub in selection.files:
        data = (src_dir / sub).read_bytes()
        rel = normalize_path(f"{base}/{sub}")
        dst = project / rel
        if dst.is_file():
            if dst.read_bytes() == data:
                continue
            conflicts.append(rel)
        plan.append((rel, dst, data))
    if conflicts and not force:
        raise VendorConflict(
            f"vendored {selection.package} differs from {selection.version} in "
            f"{len(conflicts)} file(s), e.g. {conflicts[0]}; use force to overwrite"
        )
    written = []
    with locked(project / VENDOR_DIR):
        for rel, dst, data in plan:
            dst.parent.mkdir(parents=True, exist_ok=True)
            dst.write_bytes(data)
            written.append(rel)
    return written, [(f"{selection.package}/", f"{base}/")]


def write_remappings(project_root: PathLike, remappings: Sequence[Remapping]) -> None:
    path = Path(project_root) / REMAPPINGS_FILE
    existing = {}
    if path.is_file():
        for line in path.read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                existing[k] = v
    existing.update(dict(remappings))
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "".join(f"{k}={v}\n" for k, v in sorted(existing.items()))
    if not path.is_file() or path.read_text() != body:
        path.write_text(body)


@dataclass
class ResolveReport:
    vendored: dict[str, str] = field(default_factory=dict)
    written: list[str] = field(default_factory=list)
    unresolved: list[str] = field(default_factory=list)
    errors: dict[str, str] = field(default_factory=dict)


def resolve_project(
    project_root: PathLike,
    registry: Registry,
    force: bool = False,
    ignore: Iterable[str] | None = None,
    max_rounds: int = 8,
) -> ResolveReport:
    """Vendor every missing package the registry knows, until nothing changes.

    Vendored packages may themselves import further packages, hence rounds.
    """
    project = Path(project_root)
    kwargs = {} if ignore is None else {"ignore": tuple(ignore)}
    report = ResolveReport()
    known = set(registry.packages())
    for _ in range(max_rounds):
        graph = build_graph(project, project_remappings(project), **kwargs)
        needs: dict[str, set[str]] = defaultdict(set)
        importers: dict[str, set[str]] = defaultdict(set)
        for m in graph.missing:
            if m.package in known and m.package not in report.vendored and m.package not in report.errors:
                needs[m.package].add(m.subpath)
                importers[m.package].add(m.importer)
        if not needs:
            break
        for package in sorted(needs):
            pragmas = [c for f in sorted(importers[package]) if f in graph.files for c in graph.files[f].pragmas]
            constraint = intersect_all(pragmas)
            try:
                selection = select_version(registry, package, constraint, needs[package])
            except ResolutionError as exc:
                report.errors[package] = str(exc)
                continue
            written, remaps = vendor(registry, selection, project, force=force)
            write_remappings(project, remaps)
            report.vendored[package] = str(selection.version)
            report.written.extend(written)
            log.info("vendored %s@%s (%d files written)", package, selection.version, len(written))
    graph = build_graph(project, project_remappings(project), **kwargs)
    report.unresolved = sorted({m.package or m.subpath for m in graph.missing})
    return report
