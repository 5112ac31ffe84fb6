from __future__ import annotations

import math

import numpy as np
import pytest

from singular_liouville import Divisor, solve


def unit(theta: float, phi: float) -> np.ndarray:
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                     math.cos(theta)])


CONE_AXIS = unit(1.0, 0.7)
TROYANOV_POINTS = [unit(1.0, 0.3), unit(2.0, 2.5), unit(1.4, 4.4)]


@pytest.fixture(scope="session")
def football_divisor() -> Divisor:
    return Divisor.from_beta(["1/2", "1/2"], points=[CONE_AXIS, -CONE_AXIS])


@pytest.fixture(scope="session")
def football_solve(football_divisor):
    return solve(football_divisor, 1.0)


@pytest.fixture(scope="session")
def troyanov_divisor() -> Divisor:
    return Divisor.from_beta(["-1/2"] * 3, points=TROYANOV_POINTS)


@pytest.fixture(scope="session")
def troyanov_solve(troyanov_divisor):
    return solve(troyanov_divisor, 1.0)
