import pytest

from byzavg.errors import ConfigurationError
from byzavg.verify import SUITES, run_suite


@pytest.mark.parametrize("name", sorted(SUITES))
def test_suite_passes(name):
    report = run_suite(name, seed=0)
    failing = [c for c in report.checks if not c.ok]
    assert not failing, "\n".join(f"{c.name}: {c.detail}" for c in failing)


def test_unknown_suite():
    with pytest.raises(ConfigurationError):
        run_suite("bogus")
