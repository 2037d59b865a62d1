from __future__ import annotations

import numpy as np
import pytest

from speckle_auth.database import synthesize
from speckle_auth.matching import default_threads
from speckle_auth.protocol import enroll
from speckle_auth.speckle import DEFAULT_ACQUISITION, challenge_for, make_puf, render_response

SEED = 7
CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = (passed, detail)
    print(f"\nCRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        passed, detail = CRITERIA[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def threads() -> int:
    return default_threads()


@pytest.fixture(scope="session")
def ps_t0(threads):
    """1000-record PS database, first acquisition session, enrolled."""
    db = synthesize("ps", 1000, SEED, DEFAULT_ACQUISITION.with_seed(1), threads=threads)
    return enroll(db, threads=threads)


@pytest.fixture(scope="session")
def ps_t1(threads):
    """Second acquisition session of the first 200 challenges, enrolled."""
    db = synthesize("ps", 200, SEED, DEFAULT_ACQUISITION.with_seed(2), threads=threads)
    return enroll(db, threads=threads)


@pytest.fixture(scope="session")
def ps_t0_200(ps_t0):
    return ps_t0.subset(200)


@pytest.fixture(scope="session")
def speckle_image():
    puf = make_puf("ps", 3)
    return render_response(puf, challenge_for(0, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
