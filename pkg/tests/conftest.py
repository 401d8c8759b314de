import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from finslergeo import presets


@pytest.fixture(scope="session")
def pond():
    return presets.pond_structure()


@pytest.fixture(scope="session")
def pond_rho():
    return presets.pond_rho()


@pytest.fixture(scope="session")
def pond_profile():
    return presets.pond_profile()


@pytest.fixture(scope="session")
def sphere2():
    from finslergeo.rigidity import build_sphere_polar

    return build_sphere_polar(1.0, 2)


@pytest.fixture(scope="session")
def euclid2():
    from finslergeo.core import euclidean_structure

    return euclidean_structure(2)


@pytest.fixture(scope="session")
def diag_sphere_chart():
    return presets.riemannian_sphere_chart()


@pytest.fixture(scope="session")
def catalog():
    return presets.catalog()
