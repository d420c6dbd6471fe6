import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from viewsphere.polysphere import build_sphere


@pytest.fixture(scope="session")
def sphere2():
    return build_sphere(2)


@pytest.fixture(scope="session")
def sphere3():
    return build_sphere(3)


@pytest.fixture(scope="session")
def sphere10():
    return build_sphere(10)


@pytest.fixture(scope="session")
def hex_cell_far_from_pentagons(sphere10):
    """A hexagonal cell of the nu=10 sphere whose rings 1..3 avoid pentagons."""
    for cell in sphere10.cells:
        if cell.is_pentagon:
            continue
        disk = sphere10.disk(cell.id, 3)
        if not any(sphere10.cells[c].is_pentagon for c in disk):
            return cell.id
    raise AssertionError("no pentagon-free neighborhood found")
