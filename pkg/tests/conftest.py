import pytest

from dexchange import CutSetOracle, preset_instance


@pytest.fixture(scope="session")
def demo():
    """The bundled three-user, six-packet raw-packet instance."""
    return preset_instance("example1")


@pytest.fixture()
def demo_oracle(demo):
    return CutSetOracle(demo)


@pytest.fixture(scope="session")
def demo19():
    """Same instance over GF(19), the field used by the reference trace."""
    return preset_instance("example1", q=19)
