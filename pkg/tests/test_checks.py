"""Built-in invariant suites all hold on the shipped implementations."""

import pytest

from sagepg.checks import CheckResult, available_suites, check_invariants
from sagepg.errors import ConfigurationError


def test_available_suites_is_sorted_and_complete():
    suites = available_suites()
    assert suites == sorted(suites)
    assert suites == [
        "buzen",
        "detailed-balance",
        "nu-zero-reduction",
        "schedule-monotonicity",
        "score-identity",
    ]


def test_unknown_suite_lists_the_options():
    with pytest.raises(ConfigurationError, match="buzen"):
        check_invariants("nonsense")


def test_result_fields_are_populated():
    results = check_invariants("schedule-monotonicity")
    assert results
    for res in results:
        assert isinstance(res, CheckResult)
        assert res.suite == "schedule-monotonicity"
        assert res.name
        assert res.detail


@pytest.mark.parametrize("suite", [
    "buzen",
    "detailed-balance",
    "nu-zero-reduction",
    "schedule-monotonicity",
    "score-identity",
])
def test_every_suite_passes(suite):
    results = check_invariants(suite)
    assert results, f"suite {suite} ran no checks"
    failures = [res for res in results if not res.passed]
    assert not failures, "; ".join(f"{r.name}: {r.detail}" for r in failures)
