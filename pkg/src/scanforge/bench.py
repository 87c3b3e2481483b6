"""Detector benchmarking: run tools under a time budget, score at file level.

A tool *hits* a labeled file for an SWC id when one of its successful runs
reports that id in that file.  Line numbers and function names are kept in
the records but play no part in scoring.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import shutil
import signal
import subprocess
import tempfile
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Sequence, Union

from .errors import ConfigurationError, ScanforgeError
from .frontend import normalize_path
from .reports import AnalysisReport, SwcId

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 300.0
GRACE_S = 2.0
PLACEHOLDERS = ("{source}", "{bytecode}", "{abi}", "{target}", "{output}")

PathLike = Union[str, os.PathLike]


class OutputParseError(ScanforgeError):
    pass


class RawFinding(NamedTuple):
    label: str
    file: Optional[str]
    line: Optional[int]


class Finding(NamedTuple):
    swc: int
    file: str
    line: Optional[int]


# -- output parsers ------------------------------------------------------------------

def _load_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise OutputParseError(f"output is not JSON: {exc}") from None


def parse_swc_json(text: str) -> list[RawFinding]:
    """Generic format: ``[{"label"|"swc": ..., "file": ..., "line": ...}]`` or ``{"findings": [...]}``."""
    doc = _load_json(text)
    items = doc.get("findings") if isinstance(doc, dict) else doc
    if not isinstance(items, list):
        raise OutputParseError("expected a list of findings")
    out = []
    for it in items:
        if not isinstance(it, dict):
            raise OutputParseError(f"finding is not an object: {it!r}")
        label = it.get("label", it.get("swc"))
        if label is None:
            raise OutputParseError(f"finding without label: {it!r}")
        out.append(RawFinding(str(label), it.get("file"), it.get("line")))
    return out


def parse_slither_json(text: str) -> list[RawFinding]:
    doc = _load_json(text)
    if not isinstance(doc, dict) or doc.get("success") is False:
        raise OutputParseError(f"slither reported failure: {doc.get('error') if isinstance(doc, dict) else doc}")
    out = []
    for det in (doc.get("results") or {}).get("detectors", []):
        check = det.get("check")
        elements = det.get("elements") or [{}]
        for el in elements:
            sm = el.get("source_mapping") or {}
            lines = sm.get("lines") or [None]
            out.append(RawFinding(check, sm.get("filename_relative"), lines[0]))
    return out


def parse_mythril_json(text: str) -> list[RawFinding]:
    doc = _load_json(text)
    if not isinstance(doc, dict) or doc.get("success") is False:
        raise OutputParseError("mythril reported failure")
    return [RawFinding(f"SWC-{i.get('swc-id')}", i.get("filename"), i.get("lineno"))
            for i in doc.get("issues", [])]


_LINE = re.compile(r"^\s*(?P<label>\S+)\s+(?P<file>[^\s:]+)(?::(?P<line>\d+))?\s*$")


def parse_lines(text: str) -> list[RawFinding]:
    """One finding per line: ``LABEL FILE[:LINE]``; blank and ``#`` lines skipped."""
    out = []
    for ln in text.splitlines():
        if not ln.strip() or ln.lstrip().startswith("#"):
            continue
        m = _LINE.match(ln)
        if not m:
            raise OutputParseError(f"unparseable line {ln!r}")
        line = m.group("line")
        out.append(RawFinding(m.group("label"), m.group("file"), int(line) if line else None))
    return out


PARSERS: dict[str, Callable[[str], list[RawFinding]]] = {
    "swc-json": parse_swc_json,
    "slither-json": parse_slither_json,
    "mythril-json": parse_mythril_json,
    "lines": parse_lines,
}


# -- adapters ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdapterConfig:
    tool_name: str
    command: tuple[str, ...]
    parser: str = "swc-json"
    swc_mapping: Mapping[str, int] = field(default_factory=dict)
    budget_s: float = DEFAULT_BUDGET

    def __post_init__(self):
        if not self.command:
            raise ConfigurationError(f"{self.tool_name}: empty command")
        if not any(ph in arg for arg in self.command for ph in PLACEHOLDERS):
            raise ConfigurationError(f"{self.tool_name}: command has no placeholder")
        if self.parser not in PARSERS:
            raise ConfigurationError(f"{self.tool_name}: unknown parser {self.parser!r}")
        mapping = {}
        for label, swc in self.swc_mapping.items():
            try:
                mapping[label] = SwcId.parse(swc).number
            except ScanforgeError as exc:
                raise ConfigurationError(f"{self.tool_name}: mapping {label!r}: {exc}") from None
        object.__setattr__(self, "swc_mapping", mapping)
        object.__setattr__(self, "command", tuple(self.command))

    @property
    def supported(self) -> frozenset[int]:
        return frozenset(self.swc_mapping.values())

    @classmethod
    def from_dict(cls, d: dict) -> "AdapterConfig":
        try:
            return cls(
                tool_name=d["tool_name"],
                command=tuple(d["command"]),
                parser=d.get("parser", "swc-json"),
                swc_mapping=d.get("swc_mapping", {}),
                budget_s=float(d.get("budget_s", DEFAULT_BUDGET)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"adapter entry lacks {exc}") from None


def load_adapters(path: PathLike) -> list[AdapterConfig]:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise ConfigurationError("adapter config must be a JSON array")
    return [AdapterConfig.from_dict(d) for d in doc]


# -- runs ---------------------------------------------------------------------------------

@dataclass
class DetectorRun:
    tool_name: str
    target: str
    status: str  # ok | timeout | crash
    wall_time_s: float
    findings: list[Finding] = field(default_factory=list)
    unmapped: dict[str, int] = field(default_factory=dict)
    supported: tuple[int, ...] = ()
    returncode: Optional[int] = None
    detail: str = ""

    def __post_init__(self):
        if self.status not in ("ok", "timeout", "crash"):
            raise ValueError(f"bad status {self.status!r}")
        if self.status != "ok" and self.findings:
            raise ValueError("only successful runs carry findings")

    def to_dict(self) -> dict:
        return {
            "tool_name": self.tool_name,
            "target": self.target,
            "status": self.status,
            "wall_time_s": round(self.wall_time_s, 3),
            "returncode": self.returncode,
            "findings": [{"swc": f"SWC-{f.swc}", "file": f.file, "line": f.line} for f in self.findings],
            "unmapped": dict(sorted(self.unmapped.items())),
            "supported": [f"SWC-{n}" for n in sorted(self.supported)],
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorRun":
        return cls(
            tool_name=d["tool_name"],
            target=d["target"],
            status=d["status"],
            wall_time_s=float(d.get("wall_time_s", 0.0)),
            findings=[Finding(SwcId.parse(f["swc"]).number, f["file"], f.get("line")) for f in d.get("findings", [])],
            unmapped=dict(d.get("unmapped", {})),
            supported=tuple(SwcId.parse(s).number for s in d.get("supported", [])),
            returncode=d.get("returncode"),
            detail=d.get("detail", ""),
        )


def normalize_findings(
    raw_output: str,
    adapter: AdapterConfig,
    default_file: Optional[str] = None,
) -> tuple[list[Finding], Counter]:
    """Map tool labels to SWC ids; returns (deduplicated findings, unmapped label counts).

    Findings repeating an (SWC id, file) pair collapse to the first one.
    Raises :class:`OutputParseError` when the output cannot be parsed.
    """
    raw = PARSERS[adapter.parser](raw_output)
    unmapped: Counter = Counter()
    seen = set()
    out = []
    for r in raw:
        swc = adapter.swc_mapping.get(r.label)
        if swc is None:
            unmapped[r.label] += 1
            continue
        path = r.file or default_file
        if not path:
            unmapped[r.label] += 1
            continue
        try:
            path = normalize_path(path)
        except ValueError:
            pass
        if (swc, path) in seen:
            continue
        seen.add((swc, path))
        line = r.line if isinstance(r.line, int) and not isinstance(r.line, bool) else None
        out.append(Finding(swc, path, line))
    return out, unmapped


def _target_files(target: Path, scratch: Path) -> dict[str, str]:
    """Placeholder values for a ``.sol`` target or a compiled-artifact JSON target."""
    values = {"{target}": str(target), "{source}": "", "{bytecode}": "", "{abi}": "",
              "{output}": str(scratch / "output")}
    if target.suffix == ".sol":
        values["{source}"] = str(target)
        return values
    try:
        art = json.loads(target.read_text())
    except (OSError, json.JSONDecodeError):
        return values
    if isinstance(art, dict) and "bytecode" in art:
        (scratch / "contract.bin").write_text(art.get("bytecode") or "")
        (scratch / "contract.abi").write_text(json.dumps(art.get("abi") or []))
        values["{bytecode}"] = str(scratch / "contract.bin")
        values["{abi}"] = str(scratch / "contract.abi")
        src = target.parent / (art.get("source_file") or "")
        if art.get("source_file") and src.is_file():
            values["{source}"] = str(src)
    return values


def _kill_tree(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError, AttributeError):
        proc.kill()


def run_detector(
    adapter: AdapterConfig,
    target: PathLike,
    budget_s: Optional[float] = None,
    label_path: Optional[str] = None,
    scratch_root: Optional[PathLike] = None,
) -> DetectorRun:
    """Run one tool on one target inside a scratch directory.

    The process group is killed once ``budget_s`` elapses; partial output of a
    timed-out run is discarded.  ``label_path`` names the target in the label
    namespace and is used for findings that carry no file of their own.
    """
    budget = adapter.budget_s if budget_s is None else budget_s
    exe = adapter.command[0]
    if shutil.which(exe) is None:
        raise ConfigurationError(f"{adapter.tool_name}: command {exe!r} not found")
    target = Path(target)
    if not target.exists():
        raise ConfigurationError(f"target {target} does not exist")
    name = label_path or target.name
    supported = tuple(sorted(adapter.supported))
    with tempfile.TemporaryDirectory(prefix=f"scanforge-{adapter.tool_name}-", dir=scratch_root) as tmp:
        scratch = Path(tmp)
        values = _target_files(target.resolve(), scratch)
        argv = []
        for arg in adapter.command:
            for ph, val in values.items():
                arg = arg.replace(ph, val)
            argv.append(arg)
        started = time.monotonic()
        proc = subprocess.Popen(argv, cwd=scratch, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                stdin=subprocess.DEVNULL, text=True, errors="replace",
                                start_new_session=True)
        try:
            stdout, stderr = proc.communicate(timeout=budget)
        except subprocess.TimeoutExpired:
            _kill_tree(proc)
            try:
                proc.communicate(timeout=GRACE_S)
            except subprocess.TimeoutExpired:
                pass
            wall = max(time.monotonic() - started, budget)
            return DetectorRun(adapter.tool_name, name, "timeout", wall, supported=supported,
                               detail=f"budget of {budget}s exceeded")
        wall = time.monotonic() - started
        output_file = scratch / "output"
        uses_file = any("{output}" in a for a in adapter.command)
        output = output_file.read_text(errors="replace") if uses_file and output_file.is_file() else stdout
    if not output.strip():
        status = "ok" if proc.returncode == 0 else "crash"
        detail = "" if status == "ok" else (stderr.strip()[-500:] or f"exit code {proc.returncode}")
        return DetectorRun(adapter.tool_name, name, status, wall, supported=supported,
                           returncode=proc.returncode, detail=detail)
    try:
        findings, unmapped = normalize_findings(output, adapter, default_file=name)
    except OutputParseError as exc:
        return DetectorRun(adapter.tool_name, name, "crash", wall, supported=supported,
                           returncode=proc.returncode, detail=str(exc))
    return DetectorRun(adapter.tool_name, name, "ok", wall, findings, dict(unmapped), supported,
                       returncode=proc.returncode)


def run_filename(run: DetectorRun) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]+", "_", run.target)
    return f"{run.tool_name}__{safe}.json"


def save_run(run: DetectorRun, runs_dir: PathLike) -> Path:
    d = Path(runs_dir)
    d.mkdir(parents=True, exist_ok=True)
    p = d / run_filename(run)
    p.write_text(json.dumps(run.to_dict(), indent=2) + "\n")
    return p


def load_runs(runs_dir: PathLike) -> list[DetectorRun]:
    return [DetectorRun.from_dict(json.loads(p.read_text())) for p in sorted(Path(runs_dir).glob("*.json"))]


def collect_targets(targets_dir: PathLike) -> list[tuple[Path, str]]:
    """``.sol`` files and compiled-artifact JSON files under ``targets_dir``.

    Returns ``(path, label_path)`` pairs; for artifacts the label path is the
    artifact's ``source_file``.
    """
    root = Path(targets_dir)
    out = []
    for p in sorted(root.rglob("*")):
        if not p.is_file():
            continue
        if p.suffix == ".sol":
            out.append((p, p.relative_to(root).as_posix()))
        elif p.suffix == ".json":
            try:
                art = json.loads(p.read_text())
            except (OSError, json.JSONDecodeError, UnicodeDecodeError):
                continue
            if isinstance(art, dict) and "bytecode" in art and "source_file" in art:
                out.append((p, art["source_file"]))
    return out


def run_all(
    adapters: Sequence[AdapterConfig],
    targets: Sequence[tuple[Path, str]],
    budget_s: Optional[float] = None,
    jobs: int = 1,
    scratch_root: Optional[PathLike] = None,
) -> list[DetectorRun]:
    """Every (tool, target) pair on a bounded pool, results in (tool, target) order."""
    pairs = [(a, t) for a in adapters for t in targets]

    def one(pair):
        a, (path, label) = pair
        run = run_detector(a, path, budget_s, label_path=label, scratch_root=scratch_root)
        # artifact targets of one source file share a label path; keep names unique
        if path.suffix == ".json":
            run.target = f"{label}#{path.stem.split('.')[-1]}"
        return run

    if jobs <= 1:
        return [one(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, pairs))


# -- scoring -------------------------------------------------------------------------------

@dataclass
class ScoreRow:
    swc: int
    all_count: int
    hits: dict[str, Optional[int]]  # None marks an unsupported id
    union: Optional[int]
    hit_files: dict[str, frozenset] = field(default_factory=dict, repr=False)

    @property
    def rate(self) -> Optional[int]:
        if self.union is None or self.all_count == 0:
            return None
        return detection_rate(self.union, self.all_count)


@dataclass
class ToolSummary:
    runs: int
    ok: int
    timeout: int
    crash: int
    out_of_scope: int

    @property
    def success_rate(self) -> Optional[int]:
        return detection_rate(self.ok, self.runs) if self.runs else None


@dataclass
class ScoreTable:
    tools: list[str]
    rows: list[ScoreRow]
    summary: dict[str, ToolSummary]


def detection_rate(hits: int, total: int) -> int:
    """``hits/total`` as a whole percentage, halves rounded up."""
    return (200 * hits + total) // (2 * total)


def _norm(path: str) -> str:
    try:
        return normalize_path(path)
    except ValueError:
        return path


def score_file_level(
    labels: Iterable[AnalysisReport],
    runs: Iterable[DetectorRun],
    supported: Optional[Mapping[str, Iterable[int]]] = None,
    tools: Optional[Sequence[str]] = None,
) -> ScoreTable:
    """File-level score table.

    ``supported`` maps each tool to the SWC ids it claims; by default it is
    read from the run records.  Rows for ids no tool claims come last.
    """
    vulnerable: dict[int, set[str]] = defaultdict(set)
    labeled_files = set()
    for r in labels:
        path = _norm(r.file_path)
        labeled_files.add(path)
        for n in r.categories():
            vulnerable[n].add(path)
    runs = list(runs)
    claims: dict[str, set[int]] = defaultdict(set)
    if supported is not None:
        for t, ids in supported.items():
            claims[t] = {SwcId.parse(i).number for i in ids}
    else:
        for run in runs:
            claims[run.tool_name].update(run.supported)
    names = list(tools) if tools is not None else sorted(set(claims) | {r.tool_name for r in runs})
    detected: dict[str, dict[int, set[str]]] = {t: defaultdict(set) for t in names}
    summary = {t: ToolSummary(0, 0, 0, 0, 0) for t in names}
    for run in runs:
        if run.tool_name not in summary:
            continue
        s = summary[run.tool_name]
        s.runs += 1
        setattr(s, run.status, getattr(s, run.status) + 1)
        if run.status != "ok":
            continue
        for f in run.findings:
            path = _norm(f.file)
            if path in vulnerable.get(f.swc, ()):
                detected[run.tool_name][f.swc].add(path)
            elif path not in labeled_files:
                s.out_of_scope += 1
    rows = []
    for n in sorted(vulnerable):
        hits: dict[str, Optional[int]] = {}
        hit_files = {}
        union: set[str] = set()
        any_claim = False
        for t in names:
            if n in claims.get(t, ()):
                any_claim = True
                files = frozenset(detected[t].get(n, ()))
                hit_files[t] = files
                hits[t] = len(files)
                union |= files
            else:
                hits[t] = None
        rows.append(ScoreRow(n, len(vulnerable[n]), hits, len(union) if any_claim else None, hit_files))
    rows.sort(key=lambda r: (r.union is None, r.swc))
    return ScoreTable(names, rows, summary)


def _cell(v: Optional[int]) -> str:
    return "/" if v is None else str(v)


def render_tables(table: ScoreTable, fmt: str = "md") -> str:
    """Per-SWC table, successful-analysis data and detection rates in one document."""
    if fmt == "json":
        doc = {
            "tools": table.tools,
            "rows": [
                {"id": r.swc, "all": r.all_count, **{t: r.hits[t] for t in table.tools},
                 "union": r.union, "rate": r.rate}
                for r in table.rows
            ],
            "analysis": {
                t: {"runs": s.runs, "ok": s.ok, "timeout": s.timeout, "crash": s.crash,
                    "out_of_scope": s.out_of_scope, "success_rate": s.success_rate}
                for t, s in table.summary.items()
            },
        }
        return json.dumps(doc, indent=2) + "\n"
    header = ["ID", "All", *table.tools, "Union", "Rate"]
    body = [[str(r.swc), str(r.all_count), *(_cell(r.hits[t]) for t in table.tools),
             _cell(r.union), "/" if r.rate is None else f"{r.rate}%"] for r in table.rows]
    an_header = ["Tool", "Runs", "OK", "Timeout", "Crash", "Success"]
    an_body = [[t, str(s.runs), str(s.ok), str(s.timeout), str(s.crash),
                "/" if s.success_rate is None else f"{s.success_rate}%"] for t, s in table.summary.items()]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
        w.writerow([])
        w.writerow(an_header)
        w.writerows(an_body)
        return buf.getvalue()
    if fmt != "md":
        raise ValueError(f"unknown format {fmt!r}")

    def md(h, rows):
        out = ["| " + " | ".join(h) + " |", "|" + "---|" * len(h)]
        out += ["| " + " | ".join(r) + " |" for r in rows]
        return out

    return "\n".join(md(header, body) + [""] + md(an_header, an_body)) + "\n"
