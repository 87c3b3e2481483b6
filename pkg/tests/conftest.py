import os
import shutil
from pathlib import Path

import pytest

from scanforge.compiler import discover_compilers

FIXTURES = Path(__file__).parent / "fixtures"

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE = []


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def project_copy(tmp_path):
    """Copy a fixture project into tmp_path so tests may write into it."""
    def copy(name: str) -> Path:
        dest = tmp_path / name
        shutil.copytree(FIXTURES / "projects" / name, dest)
        expected = dest / "expected.json"
        if expected.exists():
            expected.unlink()
        return dest
    return copy


@pytest.fixture(scope="session")
def solc_releases():
    solc_dir = os.environ.get("SCANFORGE_SOLC_DIR")
    releases = discover_compilers(solc_dir) if solc_dir else []
    if not releases:
        pytest.skip("no Solidity compiler (set SCANFORGE_SOLC_DIR, see tools/install_solcjs.sh)")
    return releases


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        ACCEPTANCE.append((name, status))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in ACCEPTANCE:
        terminalreporter.write_line(f"{outcome:5} {name}")
