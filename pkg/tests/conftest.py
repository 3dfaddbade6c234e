import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from piezostab.grid import build_grid  # noqa: E402
from piezostab.materials import (  # noqa: E402
    AlphaExpression,
    ElasticityTensor,
    MaterialSet,
    PiezoTensor,
    ScalarQ,
)


def generic_material(seed=0, q=None):
    """Anisotropic elasticity, dense piezo coupling and a non-constant scalar Q."""
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((6, 6))
    c = b @ b.T + 6 * np.eye(6)
    if q is None:
        q = ScalarQ(AlphaExpression(0.8, (0.3, -0.2, 0.5)))
    return MaterialSet(
        ElasticityTensor.from_engineering(c),
        PiezoTensor(0.5 * rng.standard_normal((3, 6))),
        eps=1.3,
        mu=0.7,
        gain=1.1,
        q=q,
    )


@pytest.fixture
def grid2():
    return build_grid((1.0, 0.8, 1.3), (2, 2, 2))


@pytest.fixture
def material():
    return generic_material()


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """``criterion(n, title, passed, detail)`` records a line and asserts ``passed``."""

    def record(number, title, passed, detail=""):
        _ACCEPTANCE.append((number, title, bool(passed), detail))
        assert passed, f"criterion {number} ({title}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} [{detail}]")
