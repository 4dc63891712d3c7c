import numpy as np
import pytest

from byzavg.netsim import substream


def assert_bounded(lhs, rhs, rel=1e-9, abs_tol=1e-12, label=""):
    """Assert lhs <= rhs with the package-wide tolerance convention."""
    assert lhs <= rhs * (1 + rel) + abs_tol, f"{label}: {lhs!r} > {rhs!r}"


@pytest.fixture
def rng():
    return substream(20240, 99)


@pytest.fixture
def random_family(rng):
    def make(h, d, spread=1.0):
        return spread * rng.standard_normal((h, d)) + rng.standard_normal(d)

    return make
