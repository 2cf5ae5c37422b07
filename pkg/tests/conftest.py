import pytest

from gossipgrad._kernels import available_backends


@pytest.fixture(params=available_backends())
def backend(request):
    """Run the test once per built kernel backend."""
    return request.param
