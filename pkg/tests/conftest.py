import numpy as np
import pytest

from bspf import fixture_tokens, fixture_weights


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def make_inputs(seed, n, d, shared_qk=False):
    return fixture_tokens(seed, n, d), fixture_weights(seed, d, shared_qk)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split("-")[1])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:6s} {'PASS' if ok else 'FAIL'}  {detail}")
