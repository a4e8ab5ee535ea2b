"""Acceptance battery at full size and stated tolerances.

One line per criterion is printed as it finishes and repeated in the
terminal summary.  ``RMTLAB_WORKERS`` sets the process count.
"""

import pytest

from rmtlab.harness.acceptance import CRITERIA, run_criterion

RESULT_LINES = []


@pytest.mark.slow
@pytest.mark.parametrize("number", [c[0] for c in CRITERIA],
                         ids=[f"{c[0]:02d}-{c[1].replace(' ', '-')}" for c in CRITERIA])
def test_criterion(number):
    res = run_criterion(number, "full")
    line = res.line()
    RESULT_LINES.append(line)
    print(line)
    assert res.passed, line
