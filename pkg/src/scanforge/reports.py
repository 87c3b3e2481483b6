"""SWC analysis reports: schema, (de)serialization and corpus statistics.

A report labels one Solidity file::

    {"filePath": "contracts/Vault.sol",
     "SWCs": [{"category": "SWC-107", "function": "withdraw", "lineNumber": [42]}]}
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

from .errors import SchemaError, ScanforgeError, ValidationError
from .versions import intersect_all

SWC_MIN, SWC_MAX = 100, 136
NOT_APPLICABLE = "N/A"
# weaknesses that concern a whole file (or project) rather than a code location
FILE_SCOPED = frozenset({102, 103})

SWC_TITLES = {
    100: "Function Default Visibility",
    101: "Integer Overflow and Underflow",
    102: "Outdated Compiler Version",
    103: "Floating Pragma",
    104: "Unchecked Call Return Value",
    105: "Unprotected Ether Withdrawal",
    106: "Unprotected SELFDESTRUCT Instruction",
    107: "Reentrancy",
    108: "State Variable Default Visibility",
    109: "Uninitialized Storage Pointer",
    110: "Assert Violation",
    111: "Use of Deprecated Solidity Functions",
    112: "Delegatecall to Untrusted Callee",
    113: "DoS with Failed Call",
    114: "Transaction Order Dependence",
    115: "Authorization through tx.origin",
    116: "Block values as a proxy for time",
    117: "Signature Malleability",
    118: "Incorrect Constructor Name",
    119: "Shadowing State Variables",
    120: "Weak Sources of Randomness from Chain Attributes",
    121: "Missing Protection against Signature Replay Attacks",
    122: "Lack of Proper Signature Verification",
    123: "Requirement Violation",
    124: "Write to Arbitrary Storage Location",
    125: "Incorrect Inheritance Order",
    126: "Insufficient Gas Griefing",
    127: "Arbitrary Jump with Function Type Variable",
    128: "DoS With Block Gas Limit",
    129: "Typographical Error",
    130: "Right-To-Left-Override control character (U+202E)",
    131: "Presence of unused variables",
    132: "Unexpected Ether balance",
    133: "Hash Collisions With Multiple Variable Length Arguments",
    134: "Message call with hardcoded gas amount",
    135: "Code With No Effects",
    136: "Unencrypted Private Data On-Chain",
}

COMPILER_BUCKETS = ("0.4+", "0.5+", "0.6+", "0.7+", "0.8+", "other")

PathLike = Union[str, os.PathLike]


class ReportWarning(UserWarning):
    pass


@dataclass(frozen=True, order=True)
class SwcId:
    number: int

    def __post_init__(self):
        if not isinstance(self.number, int) or not SWC_MIN <= self.number <= SWC_MAX:
            raise ValidationError(f"SWC id {self.number!r} outside SWC-{SWC_MIN}..SWC-{SWC_MAX}")

    @classmethod
    def parse(cls, text: Any, lenient: bool = False) -> "SwcId":
        if isinstance(text, SwcId):
            return text
        if isinstance(text, int) and not isinstance(text, bool):
            return cls(text)
        if not isinstance(text, str):
            raise ValidationError(f"SWC category must be a string, got {text!r}")
        s = text.strip() if lenient else text
        m = re.fullmatch(r"SWC-(\d+)", s)
        if not m:
            raise ValidationError(f"malformed SWC category {text!r}")
        return cls(int(m.group(1)))

    @property
    def title(self) -> str:
        return SWC_TITLES[self.number]

    def __str__(self) -> str:
        return f"SWC-{self.number}"


@dataclass(frozen=True)
class SwcFinding:
    category: SwcId
    function: Optional[str]  # None is the N/A marker
    line_numbers: tuple[int, ...] = ()

    def __post_init__(self):
        if any(not isinstance(n, int) or isinstance(n, bool) or n < 1 for n in self.line_numbers):
            raise ValidationError(f"{self.category}: line numbers must be positive integers")
        if not self.line_numbers and not (self.function is None and self.category.number in FILE_SCOPED):
            raise ValidationError(f"{self.category}: finding without line numbers")

    @property
    def not_applicable(self) -> bool:
        return self.function is None


@dataclass(frozen=True)
class AnalysisReport:
    file_path: str
    swcs: tuple[SwcFinding, ...] = ()

    def __post_init__(self):
        if not self.file_path:
            raise ValidationError("filePath must be non-empty")

    def categories(self) -> set[int]:
        return {f.category.number for f in self.swcs}


_TOP_KEYS = {"filePath", "SWCs"}
_FINDING_KEYS = {"category", "function", "lineNumber"}


def _extra_keys(where: str, keys: Iterable[str], allowed: set[str], strict: bool) -> None:
    extra = sorted(set(keys) - allowed)
    if not extra:
        return
    msg = f"{where}: unknown keys {', '.join(extra)}"
    if strict:
        raise SchemaError(msg)
    warnings.warn(msg, ReportWarning, stacklevel=3)


def _line_numbers(value: Any) -> tuple[int, ...]:
    """Accepts an int, a numeric string, an ``a-b`` range string or a list of those."""
    if value is None:
        return ()
    items = value if isinstance(value, list) else [value]
    out: list[int] = []
    for item in items:
        if isinstance(item, bool):
            raise ValidationError(f"bad line number {item!r}")
        if isinstance(item, int):
            out.append(item)
            continue
        if not isinstance(item, str):
            raise ValidationError(f"bad line number {item!r}")
        for part in re.split(r"[,\s]+", re.sub(r"\s*-\s*", "-", item.strip())):
            part = part.strip()
            if not part:
                continue
            m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
            if m:
                lo, hi = int(m.group(1)), int(m.group(2))
                if hi < lo:
                    raise ValidationError(f"bad line range {part!r}")
                out.extend(range(lo, hi + 1))
            elif part.isdigit():
                out.append(int(part))
            else:
                raise ValidationError(f"bad line number {part!r}")
    return tuple(out)


def parse_report(document: Any, strict: bool = True) -> AnalysisReport:
    """Validate a decoded report document.

    In strict mode unknown keys are rejected; otherwise they raise a
    :class:`ReportWarning` and categories may carry surrounding whitespace.
    """
    if not isinstance(document, dict):
        raise SchemaError("report must be a JSON object")
    for key in ("filePath", "SWCs"):
        if key not in document:
            raise SchemaError(f"report lacks {key!r}")
    _extra_keys("report", document, _TOP_KEYS, strict)
    path = document["filePath"]
    if not isinstance(path, str) or not path:
        raise SchemaError("filePath must be a non-empty string")
    if not isinstance(document["SWCs"], list):
        raise SchemaError("SWCs must be an array")
    findings = []
    for i, raw in enumerate(document["SWCs"]):
        where = f"{path}: SWCs[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(f"{where} must be an object")
        _extra_keys(where, raw, _FINDING_KEYS, strict)
        if "category" not in raw:
            raise SchemaError(f"{where} lacks 'category'")
        if strict and "function" not in raw:
            raise SchemaError(f"{where} lacks 'function'")
        func = raw.get("function", NOT_APPLICABLE)
        if func is not None and not isinstance(func, str):
            raise SchemaError(f"{where}: function must be a string")
        if func is None or func.strip() == NOT_APPLICABLE:
            func = None
        try:
            findings.append(SwcFinding(SwcId.parse(raw["category"], lenient=not strict), func,
                                       _line_numbers(raw.get("lineNumber"))))
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
    return AnalysisReport(path, tuple(findings))


def serialize_report(report: AnalysisReport) -> dict:
    return {
        "filePath": report.file_path,
        "SWCs": [
            {
                "category": str(f.category),
                "function": NOT_APPLICABLE if f.function is None else f.function,
                "lineNumber": list(f.line_numbers),
            }
            for f in report.swcs
        ],
    }


def dumps_report(report: AnalysisReport) -> str:
    return json.dumps(serialize_report(report), indent=2) + "\n"


def load_report(path: PathLike, strict: bool = True) -> AnalysisReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaError(f"not a JSON document: {exc}") from None
    return parse_report(doc, strict=strict)


@dataclass
class LoadResult:
    reports: list[AnalysisReport] = field(default_factory=list)
    errors: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def load_reports(directory: PathLike, strict: bool = True) -> LoadResult:
    """Load every ``*.json`` report under ``directory`` (sorted, recursive)."""
    root = Path(directory)
    result = LoadResult()
    for p in sorted(root.rglob("*.json")):
        rel = p.relative_to(root).as_posix()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ReportWarning)
            try:
                result.reports.append(load_report(p, strict=strict))
            except ScanforgeError as exc:
                result.errors[rel] = str(exc)
        result.warnings.extend(f"{rel}: {w.message}" for w in caught)
    return result


# -- corpus statistics -------------------------------------------------------------

@dataclass(frozen=True)
class ProjectInfo:
    name: str
    files: int
    loc: int
    bucket: str


def compiler_bucket(constraint) -> str:
    if constraint is None or constraint.is_empty():
        return "other"
    lo = constraint.lower_bound
    if lo.major == 0 and 4 <= lo.minor <= 8:
        return f"0.{lo.minor}+"
    return "other"


def scan_project(project_root: PathLike, name: Optional[str] = None,
                 ignore: Sequence[str] = ("node_modules", ".git", ".scanforge")) -> ProjectInfo:
    """File count, line count and compiler series of one DApp project.

    The series comes from the effective constraint of the largest
    compilation root (by closure size, ties broken by path).
    """
    from .depgraph import build_graph, closure, project_remappings

    root = Path(project_root)
    graph = build_graph(root, project_remappings(root), ignore=ignore)
    scanned = [f for f in graph.files.values() if not f.path.startswith(".scanforge/")]
    loc = sum(f.lines for f in scanned)
    bucket = "other"
    if graph.roots:
        best = min(graph.roots, key=lambda r: (-len(closure(graph, r)), r))
        members = [graph.files[p] for p in closure(graph, best) if p in graph.files]
        eff = intersect_all(c for f in members for c in f.pragmas)
        if eff.is_empty():
            eff = intersect_all(graph.files[best].pragmas)
        if any(f.pragmas for f in members):
            bucket = compiler_bucket(eff)
    return ProjectInfo(name or root.name, len(scanned), loc, bucket)


@dataclass(frozen=True)
class CorpusStats:
    per_swc_counts: dict[int, int]
    compiler_buckets: dict[str, int]
    avg_loc: float
    projects: int
    files: int
    findings: int

    def to_dict(self) -> dict:
        return {
            "per_swc_counts": {f"SWC-{k}": v for k, v in sorted(self.per_swc_counts.items())},
            "compiler_buckets": dict(self.compiler_buckets),
            "avg_loc": round(self.avg_loc, 2),
            "projects": self.projects,
            "files": self.files,
            "findings": self.findings,
        }


def corpus_stats(reports: Iterable[AnalysisReport], projects: Iterable[ProjectInfo] = ()) -> CorpusStats:
    counts = Counter({n: 0 for n in range(SWC_MIN, SWC_MAX + 1)})
    total = 0
    for r in reports:
        for f in r.swcs:
            counts[f.category.number] += 1
            total += 1
    projects = list(projects)
    buckets = {b: 0 for b in COMPILER_BUCKETS}
    for p in projects:
        buckets[p.bucket if p.bucket in buckets else "other"] += 1
    loc = sum(p.loc for p in projects)
    return CorpusStats(
        per_swc_counts=dict(sorted(counts.items())),
        compiler_buckets=buckets,
        avg_loc=loc / len(projects) if projects else 0.0,
        projects=len(projects),
        files=sum(p.files for p in projects),
        findings=total,
    )


def render_stats(stats: CorpusStats, fmt: str = "md") -> str:
    rows = sorted(stats.per_swc_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if fmt == "json":
        return json.dumps(stats.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "title", "count"])
        for n, c in rows:
            w.writerow([n, SWC_TITLES[n], c])
        w.writerow([])
        w.writerow(["key", "value"])
        w.writerow(["projects", stats.projects])
        w.writerow(["files", stats.files])
        w.writerow(["avg_loc", f"{stats.avg_loc:.2f}"])
        for b, c in stats.compiler_buckets.items():
            w.writerow([f"compiler {b}", c])
        return buf.getvalue()
    if fmt != "md":
        raise ValueError(f"unknown format {fmt!r}")
    lines = ["| ID | Title | # SWC |", "|---|---|---|"]
    lines += [f"| {n} | {SWC_TITLES[n]} | {c} |" for n, c in rows]
    lines.append(f"| / | Total | {stats.findings} |")
    lines += ["", "| Key Information | Numbers |", "|---|---|",
              f"| Total DApps | {stats.projects} |",
              f"| Total Solidity files | {stats.files} |",
              f"| Average Line of Code in a DApp | {stats.avg_loc:.2f} |"]
    for b, c in stats.compiler_buckets.items():
        label = "Other Compiler Version" if b == "other" else f"Compiler Version {b}"
        lines.append(f"| {label} | {c} |")
    return "\n".join(lines) + "\n"
