"""Taylor-expansion stochastic differentials, checked against Ito and Merton baselines."""

from .errors import ConfigError, NumericalError
from .estimation import (
    EnumerationOracle,
    ExpectationEstimate,
    SampleOracle,
    expect_enumeration,
    expect_mc,
    fd_derivative,
    grid_argmax,
)
from .fields import ScalarField, from_catalog
from .kernels import BACKEND, available_backends, set_backend
from .noise import NoiseLaw, PathEnsemble, ProcessSpec, TimeGrid, generate_ensemble, sample_noise
from .taylor import (
    ExpansionPoint,
    ExpansionReport,
    expected_expansion,
    expected_remainder,
    fit_a_hat,
    foc_residual,
    taylor_expand,
)

__version__ = "0.1.0"
