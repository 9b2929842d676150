"""Release criteria; each prints one PASS/FAIL line (run with ``pytest -s`` to see them)."""
import pytest

from dgalvin import acceptance


@pytest.mark.parametrize("criterion", acceptance.CRITERIA, ids=lambda c: c.__name__)
def test_criterion(criterion):
    result = criterion()
    print(result.line())
    assert result.passed, result.line()
