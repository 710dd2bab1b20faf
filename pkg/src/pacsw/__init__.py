"""Adaptive Sliced-Wasserstein distances with PAC-Bayesian lower bounds."""

__version__ = "0.1.0"

from .adaptive import OptTrace, PacSwConfig, dsw_fit, maxsw_fit, pacsw_fit  # noqa: E402
from .bounds import (  # noqa: E402
    BoundConstants,
    BoundReport,
    Bernstein,
    Bounded,
    SubGaussian,
    assemble_bound,
    best_lambda,
    phi_value,
    psi_value,
)
from .errors import DataError, DimensionMismatchError, NumericalError, PacSwError, SamplingError  # noqa: E402
from .measures import PointCloud, Projected1D, project, wasserstein_1d, wasserstein_1d_equal, wasserstein_1d_general  # noqa: E402
from .rng import Stream  # noqa: E402
from .sliced import SwEstimate, sw_estimate, sw_estimate_with_slices  # noqa: E402
from .sphere import (  # noqa: E402
    DiracSlices,
    UniformSlices,
    VmfParams,
    VmfSlices,
    kl_vmf_uniform,
    sample_slices,
    sample_uniform_sphere,
    sample_vmf,
    vmf_log_density,
)
