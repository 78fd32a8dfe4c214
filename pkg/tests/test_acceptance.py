"""Acceptance criteria at their stated tolerances; one summary line per criterion."""
import pytest

from chemolab.acceptance import CRITERIA, warm_up


@pytest.fixture(scope="module", autouse=True)
def _jit():
    warm_up()


@pytest.mark.parametrize("criterion", CRITERIA, ids=[fn.__name__ for fn in CRITERIA])
def test_criterion(criterion, capsys):
    res = criterion()
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
