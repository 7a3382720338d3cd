import numpy as np
import pytest

from krasovskii.functionals import IntegralQuadratic, PointQuadratic, Sum


def standard_lkf():
    """|phi(0)|^2 + 2 * integral of phi_2^2 over the delay window."""
    return Sum(PointQuadratic(np.eye(2)),
               IntegralQuadratic(np.diag([0.0, 2.0])))


@pytest.fixture
def lkf():
    return standard_lkf()
