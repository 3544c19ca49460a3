import numpy as np
import pytest

from thermalsim import build_mixed_field_ising, spectral_decompose

from support import G_FIELD, H_FIELD


@pytest.fixture(scope="session")
def two_site_system():
    return spectral_decompose(build_mixed_field_ising(2, G_FIELD, H_FIELD))


@pytest.fixture(scope="session")
def single_qubit_z():
    return spectral_decompose(np.diag([1.0, -1.0]).astype(complex))
