import pytest

from fitscape.core import Params


def scripted(*values):
    """Draw source yielding the given floats in order (for forced steps)."""
    it = iter(values)
    return lambda: next(it)


@pytest.fixture
def params75():
    return Params(p=0.75, r=0.5, steps=0, seed=0)
