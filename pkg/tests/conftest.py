import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import plapstab as ps

UNIT_SQUARE = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]

_DOMAINS = {
    "interval01": lambda: ps.interval_domain(0.0, 1.0),
    "interval-sym": lambda: ps.interval_domain(-1.0, 1.0),
    "square": lambda: ps.polygon_domain(UNIT_SQUARE),
}

_MEASURES = {"lebesgue": ps.lebesgue, "gaussian": ps.gaussian}


class SolveCache:
    """Session-wide cache of meshes and eigenpairs keyed by configuration."""

    def __init__(self):
        self._meshes = {}
        self._pairs = {}
        self._seconds = {}

    def domain(self, name):
        return _DOMAINS[name]()

    def mesh(self, name, level):
        key = (name, level)
        if key not in self._meshes:
            self._meshes[key] = ps.build_mesh(self.domain(name), level)
        return self._meshes[key]

    def pair(self, p, name, level, measure="lebesgue"):
        key = (p, name, level, measure)
        if key not in self._pairs:
            pair = ps.first_eigenpair(p, self.mesh(name, level), _MEASURES[measure]())
            assert pair.converged, f"ground state failed for {key}"
            self._pairs[key] = pair
        return self._pairs[key]

    def second(self, p, name, level, measure="lebesgue"):
        key = (p, name, level, measure)
        if key not in self._seconds:
            self._seconds[key] = ps.second_eigenvalue(
                p,
                self.mesh(name, level),
                _MEASURES[measure](),
                self.pair(p, name, level, measure),
            )
        return self._seconds[key]


@pytest.fixture(scope="session")
def cache():
    return SolveCache()


@pytest.fixture(scope="session")
def interval():
    return _DOMAINS["interval01"]()


@pytest.fixture(scope="session")
def square():
    return _DOMAINS["square"]()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
