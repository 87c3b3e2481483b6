"""Command-line entry point.

Exit codes: 0 success, 1 domain failure (invalid reports, failed
compilations, ...), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .bench import (collect_targets, load_adapters, load_runs, render_tables, run_all, save_run,
                    score_file_level)
from .compiler import (DEFAULT_TIMEOUT, compile_units, discover_compilers, make_unit, write_artifacts)
from .depgraph import DEFAULT_IGNORE, RootsFallbackWarning, build_graph, compilation_roots, project_remappings
from .errors import ConfigurationError, ScanforgeError
from .frontend import normalize_path
from .registry import Registry, resolve_project
from .reports import corpus_stats, load_reports, render_stats, scan_project

log = logging.getLogger("scanforge")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class GlobalConfig:
    ignore: tuple[str, ...] = DEFAULT_IGNORE
    registry_dir: Optional[Path] = None
    solc_dir: Optional[Path] = None
    jobs: int = 1
    log_level: str = "WARNING"
    fmt: str = "text"

    def __post_init__(self):
        if self.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")


@dataclass
class Outcome:
    status: str = "ok"
    data: Any = None
    text: str = ""
    warnings: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.status == "ok" else EXIT_FAIL


def _common(default) -> argparse.ArgumentParser:
    # subcommands get SUPPRESS defaults so they do not clobber options given before them
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--format", dest="fmt", choices=["text", "json", "md", "csv"], default=default,
                   help="output format (json wraps results as {command, status, data, warnings})")
    p.add_argument("--jobs", type=int, default=default, help="worker pool size for compile and bench run")
    p.add_argument("--log-level", default=default, help="logging level (default WARNING)")
    p.add_argument("--ignore", action="append", default=default, metavar="GLOB",
                   help="directory/file glob excluded from project scans (repeatable)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common(argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="scanforge", parents=[_common(None)],
                                     description="Compile DApp projects and benchmark SWC detectors.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("graph", parents=[common], help="export the file dependency graph")
    g.add_argument("project")
    g.add_argument("--dot", action="store_true", help="print DOT text instead of JSON")
    g.add_argument("--out", help="write graph.json and graph.dot into this directory")

    r = sub.add_parser("resolve", parents=[common], help="vendor missing libraries from a registry")
    r.add_argument("project")
    r.add_argument("--registry", required=True)
    r.add_argument("--force", action="store_true", help="overwrite differing vendored files")

    c = sub.add_parser("compile", parents=[common], help="compile the project's deployable roots")
    c.add_argument("project")
    c.add_argument("--root", action="append", default=None, help="compile only this root (repeatable)")
    c.add_argument("--solc-dir", default=None, help="directory of compilers (default $SCANFORGE_SOLC_DIR)")
    c.add_argument("--out", required=True)
    c.add_argument("--mode", choices=["strict", "intersect"], default="strict")
    c.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)

    v = sub.add_parser("validate", parents=[common], help="check analysis reports against the schema")
    v.add_argument("reports_dir")
    v.add_argument("--lenient", action="store_true", help="warn on unknown keys instead of failing")

    s = sub.add_parser("stats", parents=[common], help="corpus statistics")
    s.add_argument("corpus_dir")
    s.add_argument("--lenient", action="store_true")

    b = sub.add_parser("bench", help="run and score detectors")
    bsub = b.add_subparsers(dest="bench_command", required=True, metavar="ACTION")
    br = bsub.add_parser("run", parents=[common], help="run adapters over targets")
    br.add_argument("--adapters", required=True)
    br.add_argument("--targets", required=True)
    br.add_argument("--budget", type=float, default=None, help="seconds per run (default: adapter budget_s)")
    br.add_argument("--runs", default="runs", help="directory for run records (default ./runs)")
    bs = bsub.add_parser("score", parents=[common], help="score run records against labels")
    bs.add_argument("--labels", required=True)
    bs.add_argument("--runs", required=True)
    bs.add_argument("--out", default=None, help="write the table here (format from extension)")
    return parser


# -- commands ------------------------------------------------------------------------

def cmd_graph(args, cfg: GlobalConfig) -> Outcome:
    project = Path(args.project)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RootsFallbackWarning)
        graph = build_graph(project, project_remappings(project), ignore=cfg.ignore)
        roots = compilation_roots(graph)
    doc = graph.to_dict()
    doc["roots"] = roots
    out = Outcome(data=doc, warnings=[str(w.message) for w in caught])
    out.warnings += [f"{p}: {e}" for p, e in graph.errors.items()]
    out.text = graph.to_dot() if args.dot else json.dumps(doc, indent=2) + "\n"
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "graph.json").write_text(json.dumps(doc, indent=2) + "\n")
        (d / "graph.dot").write_text(graph.to_dot())
    return out


def cmd_resolve(args, cfg: GlobalConfig) -> Outcome:
    registry = Registry.open(args.registry)
    rep = resolve_project(args.project, registry, force=args.force, ignore=cfg.ignore)
    data = {"vendored": rep.vendored, "written": rep.written, "unresolved": rep.unresolved,
            "errors": rep.errors}
    lines = [f"vendored {p}@{v}" for p, v in sorted(rep.vendored.items())]
    lines += [f"unresolved {p}" for p in rep.unresolved]
    lines += [f"error {p}: {e}" for p, e in sorted(rep.errors.items())]
    status = "ok" if not rep.unresolved and not rep.errors else "failed"
    return Outcome(status, data, "\n".join(lines) + ("\n" if lines else ""))


def cmd_compile(args, cfg: GlobalConfig) -> Outcome:
    project = Path(args.project)
    remaps = project_remappings(project)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RootsFallbackWarning)
        graph = build_graph(project, remaps, ignore=cfg.ignore)
        roots = [normalize_path(r) for r in args.root] if args.root else compilation_roots(graph)
    for r in roots:
        if r not in graph.nodes:
            raise ConfigurationError(f"root {r} is not a project file")
    available = discover_compilers(cfg.solc_dir) if cfg.solc_dir else []
    units = [make_unit(graph, r, project, remaps) for r in roots]
    results = compile_units(units, available, mode=args.mode, timeout_s=args.timeout, jobs=cfg.jobs)
    out_dir = Path(args.out)
    lines = []
    for res in results:
        written = write_artifacts(res.artifacts, out_dir)
        if res.ok:
            lines.append(f"ok {res.root} solc {res.compiler_version}: {len(written)} artifact(s)")
        else:
            lines.append(f"FAIL {res.root} {res.failure.kind.value}: {res.failure.detail.splitlines()[0]}")
    status = "ok" if all(r.ok for r in results) else "failed"
    data = {"units": [r.to_dict() for r in results]}
    warns = [str(w.message) for w in caught]
    return Outcome(status, data, "\n".join(lines) + ("\n" if lines else ""), warns)


def cmd_validate(args, cfg: GlobalConfig) -> Outcome:
    res = load_reports(args.reports_dir, strict=not args.lenient)
    lines = [f"{p}: {e}" for p, e in res.errors.items()]
    lines.append(f"{len(res.reports)} valid, {len(res.errors)} invalid")
    status = "ok" if not res.errors else "failed"
    data = {"valid": len(res.reports), "invalid": res.errors}
    return Outcome(status, data, "\n".join(lines) + "\n", res.warnings)


def cmd_stats(args, cfg: GlobalConfig) -> Outcome:
    corpus = Path(args.corpus_dir)
    reports_dir = corpus / "reports" if (corpus / "reports").is_dir() else corpus
    res = load_reports(reports_dir, strict=not args.lenient)
    projects = []
    pdir = corpus / "projects"
    if pdir.is_dir():
        ignore = tuple(i for i in cfg.ignore if i not in ("test", "tests", "mock", "mocks"))
        projects = [scan_project(p, ignore=ignore) for p in sorted(pdir.iterdir()) if p.is_dir()]
    stats = corpus_stats(res.reports, projects)
    fmt = cfg.fmt if cfg.fmt in ("md", "csv") else "md"
    status = "ok" if not res.errors else "failed"
    warns = res.warnings + [f"{p}: {e}" for p, e in res.errors.items()]
    return Outcome(status, stats.to_dict(), render_stats(stats, fmt), warns)


def cmd_bench_run(args, cfg: GlobalConfig) -> Outcome:
    adapters = load_adapters(args.adapters)
    targets = collect_targets(args.targets)
    runs = run_all(adapters, targets, budget_s=args.budget, jobs=cfg.jobs)
    lines = []
    for run in runs:
        save_run(run, args.runs)
        lines.append(f"{run.tool_name} {run.target}: {run.status} ({len(run.findings)} findings)")
    data = {"runs": [r.to_dict() for r in runs]}
    return Outcome("ok", data, "\n".join(lines) + ("\n" if lines else ""))


def cmd_bench_score(args, cfg: GlobalConfig) -> Outcome:
    labels = load_reports(args.labels, strict=False)
    runs = load_runs(args.runs)
    table = score_file_level(labels.reports, runs)
    fmt = cfg.fmt if cfg.fmt in ("md", "csv", "json") else "md"
    if args.out:
        ext = Path(args.out).suffix.lstrip(".")
        out_fmt = ext if ext in ("md", "csv", "json") else fmt
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(render_tables(table, out_fmt))
    data = json.loads(render_tables(table, "json"))
    status = "ok" if not labels.errors else "failed"
    warns = [f"{p}: {e}" for p, e in labels.errors.items()]
    return Outcome(status, data, render_tables(table, fmt), warns)


COMMANDS = {
    "graph": cmd_graph,
    "resolve": cmd_resolve,
    "compile": cmd_compile,
    "validate": cmd_validate,
    "stats": cmd_stats,
    ("bench", "run"): cmd_bench_run,
    ("bench", "score"): cmd_bench_score,
}


def _config(args) -> GlobalConfig:
    solc = getattr(args, "solc_dir", None) or os.environ.get("SCANFORGE_SOLC_DIR")
    registry = getattr(args, "registry", None)
    return GlobalConfig(
        ignore=tuple(args.ignore) if args.ignore else DEFAULT_IGNORE,
        registry_dir=Path(registry) if registry else None,
        solc_dir=Path(solc) if solc else None,
        jobs=args.jobs if args.jobs is not None else 1,
        log_level=(args.log_level or "WARNING").upper(),
        fmt=args.fmt or "text",
    )


def dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    key = args.command if args.command != "bench" else ("bench", args.bench_command)
    name = key if isinstance(key, str) else " ".join(key)
    try:
        cfg = _config(args)
        logging.basicConfig(level=getattr(logging, cfg.log_level, logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        outcome = COMMANDS[key](args, cfg)
    except ConfigurationError as exc:
        return _fail(name, args, str(exc), EXIT_USAGE)
    except (ScanforgeError, OSError, ValueError) as exc:
        return _fail(name, args, str(exc), EXIT_FAIL)
    if args.fmt == "json":
        env = {"command": name, "status": outcome.status, "data": outcome.data, "warnings": outcome.warnings}
        sys.stdout.write(json.dumps(env, indent=2) + "\n")
    else:
        sys.stdout.write(outcome.text)
        for w in outcome.warnings:
            print(f"warning: {w}", file=sys.stderr)
    return outcome.exit_code


def _fail(name: str, args, message: str, code: int) -> int:
    if getattr(args, "fmt", None) == "json":
        env = {"command": name, "status": "error", "data": {"error": message}, "warnings": []}
        sys.stdout.write(json.dumps(env, indent=2) + "\n")
    print(f"scanforge {name}: error: {message}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(dispatch(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
