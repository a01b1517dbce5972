"""The twelve acceptance criteria at full size.

Each test prints one ``[PASS]``/``[FAIL]`` line; the lines are also
collected into the terminal summary by ``conftest.py``.
"""
import pytest

from polyq import acceptance

RESULTS = []


def _check(k):
    res = getattr(acceptance, f"criterion_{k}")(quick=False)
    line = res.line()
    print(line)
    RESULTS.append(line)
    assert res.passed, line


@pytest.mark.slow
@pytest.mark.parametrize("k", range(1, 13), ids=[f"criterion_{k:02d}" for k in range(1, 13)])
def test_criterion(k):
    _check(k)
