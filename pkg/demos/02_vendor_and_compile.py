"""Fill a missing library from a local registry, then compile the project.

Compilation needs real compilers; point SCANFORGE_SOLC_DIR at a directory of
``solc-X.Y.Z`` executables (``tools/install_solcjs.sh`` creates one).  Without
it the demo stops after vendoring.

    python3 demos/02_vendor_and_compile.py
"""
import os
import shutil
import tempfile
from pathlib import Path

from scanforge.compiler import compile_unit, discover_compilers, make_unit
from scanforge.depgraph import build_graph, project_remappings
from scanforge.registry import Registry, registry_add, resolve_project

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
OZ = "@openzeppelin/contracts"

work = Path(tempfile.mkdtemp(prefix="scanforge-demo-"))
project = work / "project"
shutil.copytree(FIXTURES / "projects" / "missing_external", project, ignore=shutil.ignore_patterns("expected.json"))

# Two releases of the same library: 3.4.0 targets 0.6/0.7, 4.8.0 targets 0.8.
registry = Registry.open(work / "registry")
for version in ("3.4.0", "4.8.0"):
    registry_add(registry, OZ, version, FIXTURES / "packages" / f"oz-{version}")

solc_dir = os.environ.get("SCANFORGE_SOLC_DIR")
releases = discover_compilers(solc_dir) if solc_dir else []
root = "contracts/Token.sol"

if releases:
    before = compile_unit(make_unit(build_graph(project), root, project), releases)
    print("before resolve:", before.failure.kind.value)

# Token.sol asks for ^0.8.0, so only 4.8.0 is compatible.
report = resolve_project(project, registry)
print("vendored:", report.vendored)
print("remappings:", (project / ".scanforge" / "remappings.txt").read_text().strip())

remaps = project_remappings(project)
unit = make_unit(build_graph(project, remaps), root, project, remaps)
print("closure handed to the compiler:", [path for path, _ in unit.sources])

if not releases:
    print("no compilers configured; set SCANFORGE_SOLC_DIR to compile")
else:
    result = compile_unit(unit, releases)
    for art in result.artifacts:
        print(f"{art.contract_name}: solc {art.compiler_version}, {len(art.bytecode) // 2} bytes, "
              f"{len(art.abi)} ABI entries")

shutil.rmtree(work)
