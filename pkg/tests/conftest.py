"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the package's own numerics:
matrix exponentials come from a plain Taylor series, integrals from
brute-force dense quadrature, so agreement is evidence rather than
circularity.
"""

from importlib import resources
from math import factorial

import numpy as np
import pytest

from nullctrl import (build_system, dirichlet_interval_model, full_domain_mask,
                      mask_from_boxes)


def config_text(name: str) -> str:
    return (resources.files("nullctrl") / "configs" / name).read_text("utf-8")


def config_file(name: str) -> str:
    return str(resources.files("nullctrl") / "configs" / name)


def taylor_expm(M: np.ndarray, terms: int = 60) -> np.ndarray:
    """Brute-force Taylor series for expm.

    Large arguments are halved until the norm drops below one, then the
    result is squared back up; the series itself would otherwise lose
    digits to cancellation.
    """
    norm = np.linalg.norm(M, 2)
    squarings = max(0, int(np.ceil(np.log2(norm)))) if norm > 1.0 else 0
    A = M / (2.0 ** squarings)
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for j in range(1, terms):
        term = term @ A / j
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def dense_time_quadrature(f, a: float, b: float, npts: int = 400) -> np.ndarray:
    """Integrate a matrix/array valued function with one dense Gauss rule."""
    x, w = np.polynomial.legendre.leggauss(npts)
    t = 0.5 * (a + b) + 0.5 * (b - a) * x
    vals = [wi * np.asarray(f(ti)) for ti, wi in zip(t, 0.5 * (b - a) * w)]
    return np.sum(vals, axis=0)


@pytest.fixture(scope="session")
def case3_system():
    # cascade pair: channel 1 reaches the second equation only through q21
    return build_system(np.eye(2), [[0.0, 0.0], [1.0, 0.0]], [[1.0], [0.0]])


@pytest.fixture(scope="session")
def scalar_system():
    return build_system([[1.0]], [[0.0]], [[1.0]])


@pytest.fixture(scope="session")
def interval10():
    return dirichlet_interval_model(10, np.pi)


@pytest.fixture(scope="session")
def interval20():
    return dirichlet_interval_model(20, np.pi)


@pytest.fixture(scope="session")
def narrow_mask10(interval10):
    return [mask_from_boxes(interval10, 0, [[[0.2 * np.pi, 0.5 * np.pi]]])]


@pytest.fixture(scope="session")
def wide_mask10(interval10):
    return [mask_from_boxes(interval10, 0, [[[0.2 * np.pi, 0.8 * np.pi]]])]


@pytest.fixture(scope="session")
def full_mask10(interval10):
    return [full_domain_mask(interval10, 0)]
