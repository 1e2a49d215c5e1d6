import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from shallownet import synth  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_dataset(tmp_path_factory):
    """10 synthetic PNG cells per class in the Parasitized/Uninfected layout."""
    root = tmp_path_factory.mktemp("cells")
    synth.write_dataset(str(root), 10, seed=7)
    return str(root)


_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        if call.excinfo is None:
            outcome = "PASS"
        elif call.excinfo.errisinstance(pytest.skip.Exception):
            outcome = "SKIP"
        else:
            outcome = "FAIL"
        detail = ""
        if outcome == "SKIP":
            detail = str(call.excinfo.value)
        _criteria.append((marker.args[0], outcome, item.name, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, test, detail in _criteria:
        line = f"{outcome:4}  {name}  [{test}]"
        terminalreporter.write_line(line + (f"  -- {detail}" if detail else ""))
