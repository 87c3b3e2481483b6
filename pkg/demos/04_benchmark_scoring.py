"""Run three stand-in detectors over 20 labeled files and score them.

The detectors are one script driven by an answer key, so the table is known
in advance: see tests/test_bench.py for the hand-computed values.

    python3 demos/04_benchmark_scoring.py
"""
import sys
from pathlib import Path

from scanforge.bench import AdapterConfig, collect_targets, detection_rate, render_tables, run_all, score_file_level
from scanforge.reports import load_reports

BENCH = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "bench"

mappings = {
    "toolA": {"reentrancy": "SWC-107", "overflow": "SWC-101", "unchecked": "SWC-104"},
    "toolB": {"SWC-107": "SWC-107", "SWC-103": "SWC-103"},
    "toolC": {"pragma": "SWC-103", "arith": "SWC-101"},
}
adapters = [
    AdapterConfig(tool, (sys.executable, str(BENCH / "mock_tool.py"), str(BENCH / "key.json"), tool, "{source}"),
                  "swc-json", mapping, budget_s=1.0)
    for tool, mapping in mappings.items()
]

# toolA hangs on f03 and is cut off after its 1 s budget; toolB crashes on f09.
runs = run_all(adapters, collect_targets(BENCH / "targets"), jobs=8)
for run in runs:
    if run.status != "ok":
        print(f"{run.tool_name} on {run.target}: {run.status} after {run.wall_time_s:.1f}s")

labels = load_reports(BENCH / "labels").reports
print(render_tables(score_file_level(labels, runs), "md"))

# Rates round half up to whole percent.
for total, union in [(96, 83), (81, 44), (135, 105)]:
    print(f"{union}/{total} -> {detection_rate(union, total)}%")
