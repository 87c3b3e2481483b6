import json
import shutil
import subprocess
import sys

import pytest

from scanforge.cli import dispatch


def run(capsys, *argv):
    code = dispatch([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def envelope(out):
    doc = json.loads(out)
    assert set(doc) == {"command", "status", "data", "warnings"}
    return doc


def test_graph_chain(capsys, fixtures):
    code, out, _ = run(capsys, "graph", fixtures / "projects" / "chain")
    assert code == 0
    assert len(json.loads(out)["edges"]) == 2


def test_graph_json_envelope_and_dot(capsys, fixtures, tmp_path):
    code, out, _ = run(capsys, "--format", "json", "graph", fixtures / "projects" / "cycle")
    doc = envelope(out)
    assert code == 0 and doc["command"] == "graph" and doc["warnings"]
    code, out, _ = run(capsys, "graph", fixtures / "projects" / "diamond", "--dot", "--out", tmp_path)
    assert out.startswith("digraph")
    assert (tmp_path / "graph.json").is_file() and (tmp_path / "graph.dot").read_text() == out


def test_validate(capsys, fixtures):
    code, out, _ = run(capsys, "validate", fixtures / "reports" / "good")
    assert code == 0
    code, out, _ = run(capsys, "validate", fixtures / "reports" / "bad")
    assert code == 1
    assert "Broken.json" in out


def test_compile_mismatch_strict(capsys, fixtures, tmp_path):
    code, out, _ = run(capsys, "compile", fixtures / "projects" / "mismatch", "--mode", "strict",
                       "--out", tmp_path / "out", "--solc-dir", tmp_path)
    assert code == 1
    assert "VersionMismatch" in out


def test_compile_json_summary(capsys, fixtures, tmp_path):
    code, out, _ = run(capsys, "--format", "json", "compile", fixtures / "projects" / "mismatch",
                       "--out", tmp_path / "out", "--solc-dir", tmp_path)
    doc = envelope(out)
    assert code == 1 and doc["status"] == "failed"
    assert doc["data"]["units"][0]["status"] == "VersionMismatch"


def test_compile_unknown_root_is_usage_error(capsys, fixtures, tmp_path):
    code, _, err = run(capsys, "compile", fixtures / "projects" / "simple", "--root", "Nope.sol",
                       "--out", tmp_path)
    assert code == 2 and "Nope.sol" in err


@pytest.mark.parametrize("argv", [["frobnicate"], [], ["bench"], ["graph"], ["--jobs", "0", "graph", "x"]])
def test_usage_errors(capsys, argv):
    assert dispatch(argv) == 2


def test_stats(capsys, fixtures):
    code, out, _ = run(capsys, "--format", "json", "stats", fixtures / "corpus")
    doc = envelope(out)
    assert code == 0
    assert doc["data"]["per_swc_counts"]["SWC-107"] == 3
    assert doc["data"]["projects"] == 3


def test_resolve(capsys, fixtures, project_copy, tmp_path):
    from scanforge.registry import Registry, registry_add
    reg = Registry.open(tmp_path / "reg")
    registry_add(reg, "@openzeppelin/contracts", "4.8.0", fixtures / "packages" / "oz-4.8.0")
    project = project_copy("missing_external")
    code, out, _ = run(capsys, "resolve", project, "--registry", reg.root_dir)
    assert code == 0 and "vendored @openzeppelin/contracts@4.8.0" in out
    code, out, _ = run(capsys, "graph", project)
    assert json.loads(out)["missing"] == []


def test_resolve_unknown_package_fails(capsys, project_copy, tmp_path):
    code, out, _ = run(capsys, "resolve", project_copy("missing_external"), "--registry", tmp_path / "empty")
    assert code == 1 and "unresolved @openzeppelin/contracts" in out


def write_adapters(fixtures, path):
    bench = fixtures / "bench"
    mapping = {"SWC-107": "SWC-107", "SWC-103": "SWC-103"}
    path.write_text(json.dumps([{
        "tool_name": "toolB", "parser": "swc-json", "swc_mapping": mapping, "budget_s": 5,
        "command": [sys.executable, str(bench / "mock_tool.py"), str(bench / "key.json"), "toolB", "{source}"],
    }]))


def test_bench_run_and_score(capsys, fixtures, tmp_path):
    cfg = tmp_path / "adapters.json"
    write_adapters(fixtures, cfg)
    code, out, _ = run(capsys, "--jobs", "4", "bench", "run", "--adapters", cfg,
                       "--targets", fixtures / "bench" / "targets", "--runs", tmp_path / "runs")
    assert code == 0 and "toolB f09.sol: crash" in out
    assert len(list((tmp_path / "runs").glob("*.json"))) == 20
    code, out, _ = run(capsys, "bench", "score", "--labels", fixtures / "bench" / "labels",
                       "--runs", tmp_path / "runs", "--out", tmp_path / "table.md")
    assert code == 0
    assert "| 103 | 7 | 3 | 3 | 43% |" in out
    assert (tmp_path / "table.md").read_text() == out


def test_missing_adapter_binary_is_usage_error(capsys, fixtures, tmp_path):
    cfg = tmp_path / "adapters.json"
    cfg.write_text(json.dumps([{"tool_name": "x", "command": ["no-such-tool-xyz", "{source}"]}]))
    code, _, _ = run(capsys, "bench", "run", "--adapters", cfg, "--targets", fixtures / "bench" / "targets",
                     "--runs", tmp_path / "runs")
    assert code == 2


def test_commands_deterministic(capsys, fixtures, project_copy, tmp_path):
    from scanforge.registry import Registry, registry_add
    reg = Registry.open(tmp_path / "reg")
    registry_add(reg, "@openzeppelin/contracts", "4.8.0", fixtures / "packages" / "oz-4.8.0")
    cfg = tmp_path / "adapters.json"
    write_adapters(fixtures, cfg)
    run(capsys, "bench", "run", "--adapters", cfg, "--targets", fixtures / "bench" / "targets",
        "--runs", tmp_path / "runs")
    commands = [
        ["graph", fixtures / "projects" / "diamond"],
        ["graph", "--dot", fixtures / "projects" / "cycle"],
        ["validate", fixtures / "reports" / "bad"],
        ["stats", fixtures / "corpus"],
        ["--format", "csv", "stats", fixtures / "corpus"],
        ["compile", fixtures / "projects" / "mismatch", "--out", tmp_path / "c", "--solc-dir", tmp_path],
        ["bench", "score", "--labels", fixtures / "bench" / "labels", "--runs", tmp_path / "runs"],
    ]
    for argv in commands:
        first = run(capsys, *argv)
        assert run(capsys, *argv) == first, argv
    # resolve: two fresh copies end up byte-identical
    trees = []
    for name in ("one", "two"):
        dest = tmp_path / name
        shutil.copytree(project_copy("missing_external"), dest)
        first = run(capsys, "resolve", dest, "--registry", reg.root_dir)
        trees.append((first[0], first[1], {p.relative_to(dest).as_posix(): p.read_bytes()
                                          for p in sorted(dest.rglob("*")) if p.is_file() and p.name != ".lock"}))
        shutil.rmtree(tmp_path / "missing_external")
    assert trees[0] == trees[1]


def test_module_entry_point(fixtures):
    proc = subprocess.run([sys.executable, "-m", "scanforge", "graph", str(fixtures / "projects" / "chain")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["roots"] == ["A.sol"]
