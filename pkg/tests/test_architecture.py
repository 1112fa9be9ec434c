import ast
from pathlib import Path

import pytest

PKG = Path(__file__).resolve().parent.parent / "src" / "stoclaw"
FORBIDDEN_MODULES = {"os", "sys", "io", "time", "datetime", "pathlib", "shutil", "tempfile", "glob", "socket",
                     "subprocess", "logging"}
FORBIDDEN_CALLS = {"open", "print", "input"}
PURE = sorted(p for p in PKG.rglob("*.py") if "cli" not in p.relative_to(PKG).parts
              and p.name != "__main__.py")


def test_scan_finds_modules():
    names = {p.relative_to(PKG).as_posix() for p in PURE}
    assert {"lattice.py", "field.py", "dynamics.py", "malliavin.py", "ergolab/experiments.py"} <= names


@pytest.mark.parametrize("path", PURE, ids=lambda p: p.relative_to(PKG).as_posix())
def test_no_io_or_clock_outside_cli(path):
    tree = ast.parse(path.read_text(encoding="utf-8"))
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                assert alias.name.split(".")[0] not in FORBIDDEN_MODULES, (path, alias.name)
        elif isinstance(node, ast.ImportFrom) and node.level == 0:
            assert node.module.split(".")[0] not in FORBIDDEN_MODULES, (path, node.module)
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            assert node.func.id not in FORBIDDEN_CALLS, (path, node.func.id, node.lineno)


def test_cli_does_not_leak_into_core():
    for path in PURE:
        tree = ast.parse(path.read_text(encoding="utf-8"))
        for node in ast.walk(tree):
            if isinstance(node, ast.ImportFrom) and node.module:
                assert not node.module.startswith("cli") and "cli" not in node.module.split("."), path
