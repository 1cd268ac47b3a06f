import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from immergrid.cases import discretize, slice_config, star_config  # noqa: E402
from immergrid.config import bundled_config  # noqa: E402
from immergrid.geometry import star_levelset  # noqa: E402
from immergrid.mesh import EmbeddingGrid, build_uniform, trim  # noqa: E402
from immergrid.quadrature import integrate  # noqa: E402

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def star16():
    return discretize(star_config(16))


@pytest.fixture(scope="session")
def star8():
    # coarse star case for quick structural checks
    return discretize(star_config(8, depth=3))


@pytest.fixture(scope="session")
def star12():
    # moderately cut star, well inside double-precision reach of the smoothers
    return discretize(star_config(12, depth=2))


@pytest.fixture(scope="session")
def square8():
    """Uncut unit square, quadratic Lagrange, Dirichlet on every side."""
    return discretize(bundled_config().replace(
        geometry__levelset="constant(1)", mesh__origin=[0.0, 0.0], mesh__extent=[1.0, 1.0],
        mesh__resolution=[8, 8]))


@pytest.fixture(scope="session")
def star_quad16():
    g = EmbeddingGrid((-1.0, -1.0), (2.0, 2.0), (16, 16))
    return integrate(trim(build_uniform(g), star_levelset()), 2, 3)


def random_points(space, count, rng):
    """Uniform points inside randomly chosen physical elements of ``space``."""
    k = rng.integers(0, len(space.elements), count)
    return space.lower[k] + space.size[k] * rng.random((count, 2))


__all__ = ["ACCEPTANCE_LINES", "random_points", "slice_config", "star_config"]
