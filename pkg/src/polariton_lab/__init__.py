"""Dark-state polariton toolkit.

Morris-Shore reduction of bipartite couplings, the dual-V stationary-light
model, exact and perturbative dispersion of the dark branch, spectral
propagation of the five coupled fields and storage/retrieval protocols.
All quantities are in reduced units with ``gamma = c = hbar = 1``.
"""

__version__ = "0.1.0"

from .checks import Check
from .config import RunConfig, dump_config, parse_config
from .dispersion import (
    DispersionBranch,
    PerturbativeCoefficients,
    dark_branch,
    dark_branch_derivatives,
    eigen_branches,
    perturbative_coefficients,
    track_dark_modes,
    verify_mass_identity,
)
from .errors import (
    ConfigError,
    DegenerateControlError,
    InvalidInputError,
    NonAdiabaticSpectrumError,
    PolaritonLabError,
    StepSizeError,
    TrackingError,
    UnsupportedRegimeError,
)
from .model import (
    ModelParams,
    build_h,
    dark_polariton_vector,
    derived_scales,
    mixing_angles,
    mode_matrix,
    validate_adiabaticity,
)
from .morris_shore import CouplingMatrix, MsDecomposition, dark_stability_under_b_diagonal, morris_shore
from .propagation import (
    FieldState,
    Grid1D,
    PulseSpec,
    compare_full_vs_effective,
    dark_amplitude,
    evolve_effective,
    evolve_full,
    init_on_dark_branch,
)
from .protocols import (
    ControlSchedule,
    Segment,
    run_custom,
    run_retrieval_stationary,
    run_storage,
)
from .runner import run

__all__ = [name for name in dir() if not name.startswith("_")]
