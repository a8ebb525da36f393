import pytest

from exact_algebra import FieldSpec


@pytest.fixture
def f3():
    return FieldSpec.prime(3)


@pytest.fixture
def f2():
    return FieldSpec.prime(2)


@pytest.fixture
def q():
    return FieldSpec.rationals()


@pytest.fixture
def f_mersenne31():
    """F_{2**31 - 1}: the largest prime kept in int64 arrays."""
    return FieldSpec.prime(2**31 - 1)
