import pytest

from uidla.rng import RngStream


@pytest.fixture
def rng(request):
    # one stream per test, keyed by the test name so tests do not share draws
    key = sum(ord(c) * (i + 1) for i, c in enumerate(request.node.name))
    return RngStream(20240607, key)
