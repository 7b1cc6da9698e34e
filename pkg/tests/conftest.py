"""Shared fixtures: domains, metrics, operators, and solved families.

Everything heavy is session-scoped so the cost is paid once. The 33^3
families (40 controls each) take about 1.5 s apiece; tests that can make
their point at 17^3 use the small fixtures.
"""

import numpy as np
import pytest

import hqlab.control as ctl
import hqlab.elliptic as elliptic
import hqlab.geometry as geometry

UNIT_BOX = [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]


@pytest.fixture(scope="session")
def dom17():
    return geometry.build_domain(UNIT_BOX, 17)


@pytest.fixture(scope="session")
def dom33():
    return geometry.build_domain(UNIT_BOX, 33)


@pytest.fixture(scope="session")
def flat17(dom17):
    return geometry.METRIC_PRESETS["flat"](dom17)


@pytest.fixture(scope="session")
def conf17(dom17):
    return geometry.METRIC_PRESETS["conformal-sine"](dom17, amplitude=0.3)


@pytest.fixture(scope="session")
def flat33(dom33):
    return geometry.METRIC_PRESETS["flat"](dom33)


@pytest.fixture(scope="session")
def conf33(dom33):
    return geometry.METRIC_PRESETS["conformal-sine"](dom33, amplitude=0.3)


@pytest.fixture(scope="session")
def op_flat17(flat17):
    return elliptic.assemble(flat17)


@pytest.fixture(scope="session")
def op_conf17(conf17):
    return elliptic.assemble(conf17)


@pytest.fixture(scope="session")
def op_flat33(flat33):
    return elliptic.assemble(flat33)


@pytest.fixture(scope="session")
def op_conf33(conf33):
    return elliptic.assemble(conf33)


@pytest.fixture(scope="session")
def fam_flat17(op_flat17):
    d = ctl.default_dictionary(op_flat17.dom, size=24, seed=2026)
    return ctl.solve_family(op_flat17, d)


@pytest.fixture(scope="session")
def fam_flat33(op_flat33):
    d = ctl.default_dictionary(op_flat33.dom, size=40, seed=2026)
    return ctl.solve_family(op_flat33, d)


@pytest.fixture(scope="session")
def fam_conf33(op_conf33):
    d = ctl.default_dictionary(op_conf33.dom, size=40, seed=2026)
    return ctl.solve_family(op_conf33, d)


def window_mask(dom, lo=0.25, hi=0.75):
    """Fixed physical subbox, the standard way to read convergence rates
    without the moving near-boundary rim polluting the sup."""
    x = dom.node_coords()
    m = dom.allowed.copy()
    for a in range(3):
        a0, a1 = dom.box[a]
        m &= (x[..., a] >= a0 + lo * (a1 - a0)) & (x[..., a] <= a0 + hi * (a1 - a0))
    return m
