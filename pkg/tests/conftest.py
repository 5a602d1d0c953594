import numpy as np
import pytest

from transmission.assembly import (
    BetaCoefficient,
    DiffusionTensor,
    KernelSpec,
    build_operator,
)
from transmission.geometry import Segment, build_interface_measure, build_square_mesh


def default_operator(n, dirichlet_side="left", beta_value=1.0, delta=1,
                     y0=0.5, s=0.5):
    mesh = build_square_mesh(n, Segment(y0), dirichlet_side=dirichlet_side)
    measure = build_interface_measure(mesh)
    D = DiffusionTensor.isotropic(mesh)
    beta = BetaCoefficient.constant(measure, beta_value)
    kernel = KernelSpec(s=s, dim_d=measure.dim_d)
    return build_operator(mesh, measure, D, beta, kernel, delta=delta)


@pytest.fixture(scope="session")
def op16():
    return default_operator(16)


@pytest.fixture(scope="session")
def op32():
    return default_operator(32)


@pytest.fixture(scope="session")
def op16_neumann():
    return default_operator(16, dirichlet_side="none")


@pytest.fixture(scope="session")
def spec16(op16):
    from transmission.operators import spectrum

    return spectrum(op16)


@pytest.fixture()
def rng():
    # fresh deterministic stream per test: results do not depend on which
    # other tests ran before
    return np.random.default_rng(12345)
