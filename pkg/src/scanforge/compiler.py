"""Compiler selection and the standard-JSON compile driver."""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import signal
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .depgraph import DependencyGraph, Remapping, closure
from .errors import ScanforgeError
from .frontend import parse_source
from .versions import UNCONSTRAINED, Version, VersionConstraint, intersect_all

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 120
OUTPUT_SELECTION = {"*": {"*": ["abi", "evm.bytecode.object"]}}

PathLike = Union[str, os.PathLike]


class FailureKind(str, enum.Enum):
    MISSING_FILE = "MissingFile"
    VERSION_MISMATCH = "VersionMismatch"
    COMPILE_ERROR = "CompileError"
    COMPILER_UNAVAILABLE = "CompilerUnavailable"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class FailureClass:
    kind: FailureKind
    detail: str

    def __str__(self) -> str:
        return f"{self.kind.value}: {self.detail}"


class CompileFailure(ScanforgeError):
    def __init__(self, kind: FailureKind, detail: str):
        self.failure = FailureClass(kind, detail)
        super().__init__(str(self.failure))

    @property
    def kind(self) -> FailureKind:
        return self.failure.kind


@dataclass(frozen=True)
class CompilerRelease:
    version: Version
    invocation: str

    def __post_init__(self):
        if not self.invocation:
            raise ValueError("compiler invocation must be non-empty")


@dataclass(frozen=True)
class CompilationUnit:
    root: str
    sources: tuple[tuple[str, str], ...]
    remappings: tuple[Remapping, ...] = ()
    constraints: tuple[tuple[str, VersionConstraint], ...] = ()
    unresolved: tuple[str, ...] = ()

    def __post_init__(self):
        if self.root not in dict(self.sources):
            raise ValueError(f"root {self.root} missing from sources")

    def constraint_of(self, path: str) -> VersionConstraint:
        return dict(self.constraints).get(path, UNCONSTRAINED)

    @property
    def constraint(self) -> VersionConstraint:
        return intersect_all(c for _, c in self.constraints)


@dataclass(frozen=True)
class CompilationArtifact:
    source_file: str
    contract_name: str
    bytecode: str
    abi: list
    compiler_version: str

    def __post_init__(self):
        if not re.fullmatch(r"(0x)?[0-9a-fA-F]*", self.bytecode):
            raise ValueError(f"{self.contract_name}: bytecode is not hex")

    def to_dict(self) -> dict:
        return {
            "contract_name": self.contract_name,
            "source_file": self.source_file,
            "compiler_version": self.compiler_version,
            "bytecode": self.bytecode,
            "abi": self.abi,
        }


# -- compiler discovery and selection ------------------------------------------

_BINARY = re.compile(r"^solc[-_]?v?(\d+\.\d+\.\d+)(?:[^\d].*)?$")


def discover_compilers(solc_dir: PathLike) -> list[CompilerRelease]:
    """Releases found in ``solc_dir``.

    A ``compilers.json`` mapping ``{"0.8.19": "path/to/binary"}`` takes
    precedence; otherwise executables named like ``solc-0.8.19`` are used.
    """
    d = Path(solc_dir)
    mapping = d / "compilers.json"
    found = {}
    if mapping.is_file():
        for ver, path in json.loads(mapping.read_text()).items():
            exe = Path(path) if os.path.isabs(path) else d / path
            found[Version.parse(ver)] = str(exe)
    elif d.is_dir():
        for entry in sorted(d.iterdir()):
            m = _BINARY.match(entry.name)
            if m and entry.is_file() and os.access(entry, os.X_OK):
                found.setdefault(Version.parse(m.group(1)), str(entry))
    return [CompilerRelease(v, p) for v, p in sorted(found.items())]


def solve_version(constraint: VersionConstraint, available: Sequence[CompilerRelease]) -> CompilerRelease:
    """Highest available release the constraint admits."""
    best = None
    for rel in available:
        if constraint.allows(rel.version) and (best is None or rel.version > best.version):
            best = rel
    if best is None:
        have = ", ".join(str(r.version) for r in available) or "none"
        raise CompileFailure(FailureKind.COMPILER_UNAVAILABLE, f"no compiler satisfies {constraint} (have {have})")
    return best


# -- units ----------------------------------------------------------------------

def make_unit(
    graph: DependencyGraph,
    root: str,
    project_root: PathLike,
    remappings: Sequence[Remapping] = (),
) -> CompilationUnit:
    base = Path(project_root)
    sources = []
    constraints = []
    members = closure(graph, root)
    inside = set(members)
    unresolved = sorted(f"{m.importer}: {m.raw_path}" for m in graph.missing if m.importer in inside)
    for path in members:
        data = (base / path).read_bytes()
        sources.append((path, data.decode("utf-8")))
        sf = graph.files.get(path) or parse_source(path, data)
        if sf.pragmas:
            constraints.append((path, intersect_all(sf.pragmas)))
    return CompilationUnit(root, tuple(sources), tuple(remappings), tuple(constraints), tuple(unresolved))


def check_consistency(
    unit: CompilationUnit,
    mode: str = "strict",
    available: Optional[Sequence[CompilerRelease]] = None,
) -> VersionConstraint:
    """Effective constraint of ``unit`` or :class:`CompileFailure` (VersionMismatch).

    ``strict`` pins the root's own version (solved against ``available``, or
    the lowest version the root admits when none fits) and
    requires every dependency to accept it.  ``intersect`` only requires the
    file constraints to overlap.
    """
    root_c = unit.constraint_of(unit.root)
    if mode == "intersect":
        effective = unit.constraint
        if effective.is_empty():
            names = ", ".join(f"{p} ({c})" for p, c in unit.constraints)
            raise CompileFailure(FailureKind.VERSION_MISMATCH, f"no common compiler version: {names}")
        return effective
    if mode != "strict":
        raise ValueError(f"unknown consistency mode {mode!r}")
    if unit.root not in dict(unit.constraints):
        # a root without pragma pins nothing; fall back to overlap checking
        return check_consistency(unit, "intersect")
    pinned = root_c.lower_bound
    if available:
        try:
            pinned = solve_version(root_c, available).version
        except CompileFailure:
            pass  # unavailability surfaces later; report dependency conflicts first
    offenders = [f"{p} ({c})" for p, c in unit.constraints if p != unit.root and not c.allows(pinned)]
    if offenders:
        raise CompileFailure(
            FailureKind.VERSION_MISMATCH,
            f"{unit.root} ({root_c}) pins {pinned}, rejected by {', '.join(offenders)}",
        )
    return unit.constraint


def build_standard_json(unit: CompilationUnit) -> dict:
    return {
        "language": "Solidity",
        "sources": {path: {"content": content} for path, content in sorted(unit.sources)},
        "settings": {
            "remappings": [f"{prefix}={target}" for prefix, target in unit.remappings],
            "outputSelection": OUTPUT_SELECTION,
        },
    }


def dumps_standard_json(unit: CompilationUnit) -> str:
    return json.dumps(build_standard_json(unit), indent=None, separators=(",", ":"))


# -- diagnostics ------------------------------------------------------------------

_MISSING = re.compile(
    r"(Source\s+\"?[^\"\n]*\"?\s+not found|File not found|not found:|"
    r"File outside of allowed directories|Cannot import|No such file)",
    re.IGNORECASE,
)
_VERSION = re.compile(r"(requires different compiler version|Source file requires)", re.IGNORECASE)


def classify_failure(diagnostics: str) -> FailureClass:
    if _MISSING.search(diagnostics):
        kind = FailureKind.MISSING_FILE
    elif _VERSION.search(diagnostics):
        kind = FailureKind.VERSION_MISMATCH
    else:
        kind = FailureKind.COMPILE_ERROR
    return FailureClass(kind, diagnostics.strip())


def _parse_output(stdout: str) -> dict:
    # some compiler front-ends print banner lines before the JSON document
    start = stdout.find("{")
    if start < 0:
        raise ValueError("no JSON document on compiler stdout")
    return json.loads(stdout[start:])


def _kill_tree(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError, AttributeError):
        proc.kill()


def compile(
    unit: CompilationUnit,
    release: CompilerRelease,
    timeout_s: float = DEFAULT_TIMEOUT,
    scratch_dir: Optional[PathLike] = None,
) -> list[CompilationArtifact]:
    """Run ``release`` on ``unit`` through the standard-JSON protocol.

    Returns one artifact per contract declared in the root file; raises
    :class:`CompileFailure` otherwise.  The compiler runs in a fresh scratch
    directory in its own process group, killed as a whole on timeout.
    """
    payload = dumps_standard_json(unit)
    with tempfile.TemporaryDirectory(prefix="scanforge-solc-", dir=scratch_dir) as scratch:
        (Path(scratch) / "input.json").write_text(payload)
        try:
            proc = subprocess.Popen(
                [release.invocation, "--standard-json"],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                cwd=scratch,
                text=True,
                start_new_session=True,
            )
        except OSError as exc:
            raise CompileFailure(FailureKind.COMPILER_UNAVAILABLE, f"{release.invocation}: {exc}") from None
        try:
            stdout, stderr = proc.communicate(payload, timeout=timeout_s)
        except subprocess.TimeoutExpired:
            _kill_tree(proc)
            proc.communicate()
            raise CompileFailure(FailureKind.TIMEOUT, f"{unit.root}: compiler exceeded {timeout_s}s") from None
    try:
        out = _parse_output(stdout)
    except ValueError:
        diag = (stderr or stdout or f"compiler exited with {proc.returncode}").strip()
        failure = classify_failure(diag)
        raise CompileFailure(failure.kind, failure.detail) from None
    errors = [e for e in out.get("errors", []) if e.get("severity") == "error"]
    if errors:
        diag = "\n".join(e.get("formattedMessage") or e.get("message", "") for e in errors)
        failure = classify_failure(diag)
        raise CompileFailure(failure.kind, failure.detail)
    contracts = out.get("contracts", {}).get(unit.root, {})
    root_src = dict(unit.sources)[unit.root]
    declared = [d.name for d in parse_source(unit.root, root_src.encode()).declarations]
    artifacts = []
    for name in declared:
        c = contracts.get(name)
        if c is None:
            continue
        artifacts.append(CompilationArtifact(
            source_file=unit.root,
            contract_name=name,
            bytecode=c.get("evm", {}).get("bytecode", {}).get("object", ""),
            abi=c.get("abi", []),
            compiler_version=str(release.version),
        ))
    return artifacts


def artifact_filename(artifact: CompilationArtifact) -> str:
    stem = Path(artifact.source_file).stem
    return f"{stem}.{artifact.contract_name}.json"


def write_artifacts(artifacts: Iterable[CompilationArtifact], out_dir: PathLike) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for a in artifacts:
        p = out / artifact_filename(a)
        p.write_text(json.dumps(a.to_dict(), indent=2) + "\n")
        paths.append(p)
    return paths


# -- project orchestration ---------------------------------------------------------

@dataclass
class UnitResult:
    root: str
    compiler_version: Optional[str] = None
    artifacts: list[CompilationArtifact] = field(default_factory=list)
    failure: Optional[FailureClass] = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.failure is None

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "status": "ok" if self.ok else self.failure.kind.value,
            "compiler_version": self.compiler_version,
            "contracts": [a.contract_name for a in self.artifacts],
            "detail": None if self.ok else self.failure.detail,
        }


def compile_unit(
    unit: CompilationUnit,
    available: Sequence[CompilerRelease],
    mode: str = "strict",
    timeout_s: float = DEFAULT_TIMEOUT,
    scratch_dir: Optional[PathLike] = None,
) -> UnitResult:
    """Consistency check, version solving and compilation of one unit."""
    result = UnitResult(unit.root)
    started = time.monotonic()
    try:
        effective = check_consistency(unit, mode, available)
        if unit.unresolved:
            raise CompileFailure(FailureKind.MISSING_FILE, "unresolved imports: " + "; ".join(unit.unresolved))
        release = solve_version(effective, available)
        result.compiler_version = str(release.version)
        result.artifacts = compile(unit, release, timeout_s, scratch_dir)
    except CompileFailure as exc:
        result.failure = exc.failure
    result.seconds = time.monotonic() - started
    return result


def compile_units(
    units: Sequence[CompilationUnit],
    available: Sequence[CompilerRelease],
    mode: str = "strict",
    timeout_s: float = DEFAULT_TIMEOUT,
    jobs: int = 1,
    scratch_dir: Optional[PathLike] = None,
) -> list[UnitResult]:
    """Compile units on a bounded pool; results come back in input order."""
    def one(u):
        return compile_unit(u, available, mode, timeout_s, scratch_dir)

    if jobs <= 1:
        return [one(u) for u in units]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, units))
