import numpy as np
import pytest

from neutdiff import benchmarks, geometry


@pytest.fixture(scope="session")
def ringhals():
    return benchmarks.builtin_benchmark("ringhals1d")


@pytest.fixture(scope="session")
def twigl():
    return benchmarks.builtin_benchmark("twigl2d")


@pytest.fixture(scope="session")
def iaea2d():
    return benchmarks.builtin_benchmark("iaea2d")


def make_slab(material, length=2.0, kind="neumann", nseg=None):
    """Uniform 1-D slab with the same condition on both ends."""
    segs = [
        geometry.BoundarySegment(kind, geometry.Box([0.0], [0.0]),
                                 np.array([-1.0]),
                                 c_bou=0.5 if kind == "robin" else None),
        geometry.BoundarySegment(kind, geometry.Box([length], [length]),
                                 np.array([1.0]),
                                 c_bou=0.5 if kind == "robin" else None),
    ]
    return geometry.Domain(
        1, [0.0], [length], {"m": material},
        [geometry.Region("all", "m", (geometry.Box([0.0], [length]),))],
        segs, name="slab")


def kinf(m):
    """Closed-form two-group infinite-medium multiplication factor."""
    return ((m.nu_sigma_f1 + m.nu_sigma_f2 * m.sigma_12 / m.sigma_a2)
            / (m.sigma_a1 + m.sigma_12))
