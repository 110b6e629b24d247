import pytest

from mmpair.errors import ConfigurationError
from mmpair.verify import SUITES, binomial_tail, run_suite, run_suites


@pytest.mark.parametrize("name", ["hierarchy", "theorem5", "rademacher", "gradient",
                                  "diagonalization", "determinism", "theorem6"])
def test_quick_suites_pass(name):
    res = run_suite(name)
    assert res["passed"], res["details"]
    assert res["seconds"] >= 0


def test_fault_hook_breaks_decoupling():
    assert run_suite("decoupling")["passed"]
    assert not run_suite("decoupling", fault="negate-decoupling")["passed"]


def test_unknown_names():
    with pytest.raises(ConfigurationError):
        run_suite("nope")
    with pytest.raises(ConfigurationError):
        run_suites("nope")
    with pytest.raises(ConfigurationError):
        run_suite("hierarchy", fault="other")


def test_suite_list():
    assert set(SUITES) == {"hierarchy", "decoupling", "monotonicity", "theorem3", "theorem4",
                           "theorem5", "rademacher", "decay", "gradient", "diagonalization",
                           "theorem6", "determinism"}


def test_binomial_tail_small_cases():
    assert binomial_tail(0, 2, 0.5) == 0.75
    assert binomial_tail(2, 2, 0.5) == 0.0
