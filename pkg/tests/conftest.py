"""Session-scoped pipeline runs shared by the acceptance and expansion tests.

Each run goes through the command line entry point into a per-session temporary
directory, so the suite needs no pre-existing run data.
"""

from pathlib import Path

import pytest

from nsasymp import cli
from nsasymp.pipeline import load_run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _cli(*argv):
    code = cli.main(list(argv))
    assert code == 0, f"nsasymp {' '.join(argv)} exited with {code}"


def _simulate(name, out, analyze=True):
    _cli("simulate", "--config", str(CONFIGS / f"{name}.cfg"), "--output-dir", str(out))
    run_dir = out / name
    if analyze:
        _cli("analyze", "--run", str(run_dir))
    return run_dir


@pytest.fixture(scope="session")
def runs_root(tmp_path_factory):
    return tmp_path_factory.mktemp("runs")


@pytest.fixture(scope="session")
def reference_run(runs_root):
    return _simulate("reference", runs_root)


@pytest.fixture(scope="session")
def dipole_run(runs_root):
    return _simulate("dipole", runs_root, analyze=False)


@pytest.fixture(scope="session")
def heat_run(runs_root):
    return _simulate("heat", runs_root)


@pytest.fixture(scope="session")
def dipole_expansion(dipole_run):
    return load_run(dipole_run).expansion()


@pytest.fixture(scope="session")
def smoke_runs(runs_root):
    """The smoke config run end to end twice, into two separate output roots."""
    return tuple(_simulate("smoke", runs_root / tag) for tag in ("first", "second"))


# -- acceptance summary --------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(criterion: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[criterion] = (ok, detail)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
