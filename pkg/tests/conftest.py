import pytest

from unconfused import _kernels


@pytest.fixture(scope="session")
def compiled_kernels():
    """Compile the jitted kernels once so wall-clock assertions elsewhere do
    not pay the one-time JIT cost."""
    _kernels.warmup()
    return _kernels.backend()
