import sys

import numpy as np
import pytest

import colloidfield as cf

E1, E2, E3 = np.eye(3)


@pytest.fixture(scope="session")
def sphere_grid():
    return cf.build_grid(cf.sphere(1.0), 24, (16, 32), 16.0)


@pytest.fixture(scope="session")
def small_grid():
    return cf.build_grid(cf.sphere(1.0), 12, (8, 16), 8.0)


@pytest.fixture(scope="session")
def spheroid_grid():
    return cf.build_grid(cf.spheroid(1.0, 1.5), 16, (12, 24), 12.0)


def hedgehog(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def random_tangent(rng, values):
    d = rng.standard_normal(values.shape)
    return d - np.einsum("ij,ij->i", d, values)[:, None] * values


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
