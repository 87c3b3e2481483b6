"""Validate analysis reports and summarize a corpus.

    python3 demos/03_report_corpus.py
"""
from pathlib import Path

from scanforge.reports import corpus_stats, dumps_report, load_reports, parse_report, render_stats, scan_project

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

# A report names one file and lists the weaknesses found in it.  Floating
# pragma findings concern the whole file, so their function is "N/A".
report = parse_report({
    "filePath": "contracts/Vault.sol",
    "SWCs": [
        {"category": "SWC-107", "function": "withdraw", "lineNumber": [42]},
        {"category": "SWC-103", "function": "N/A", "lineNumber": [2]},
    ],
})
for f in report.swcs:
    where = "whole file" if f.not_applicable else f.function
    print(f"{f.category} ({f.category.title}) in {where}")
print(dumps_report(report))

# Loading a directory collects schema errors per file instead of stopping.
bad = load_reports(FIXTURES / "reports" / "bad")
for name, error in bad.errors.items():
    print(f"rejected {name}: {error}")

corpus = FIXTURES / "corpus"
reports = load_reports(corpus / "reports").reports
projects = [scan_project(p) for p in sorted((corpus / "projects").iterdir())]
print(render_stats(corpus_stats(reports, projects), "md"))
