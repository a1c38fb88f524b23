"""Statistical evaluation of direction-finding antennas and algorithms."""

__version__ = "0.1.0"

from ._validation import NumericalError  # noqa: E402
from .estimator import (  # noqa: E402
    MusicDoaEstimator,
    add_noise,
    covariance,
    estimate_doa,
    music_spectrum,
    noise_subspace,
    normalize,
    steering_vector,
)
from .evaluation import EvalReport, histogram_stability, rmse, run_monte_carlo  # noqa: E402
from .geometry import (  # noqa: E402
    DoaGrid,
    azimuth_error,
    equiangular_grid,
    great_circle_error,
    hemisphere_grid,
)
from .patterns import (  # noqa: E402
    Direction,
    PortSet,
    cupola_port_set,
    fourier_pattern,
    fourier_port_set,
    load_pattern_file,
    magnetic_dipole_pattern,
    monopole_pattern,
    save_pattern_file,
)

__all__ = [
    "Direction",
    "DoaGrid",
    "EvalReport",
    "MusicDoaEstimator",
    "NumericalError",
    "PortSet",
    "add_noise",
    "azimuth_error",
    "covariance",
    "cupola_port_set",
    "equiangular_grid",
    "estimate_doa",
    "fourier_pattern",
    "fourier_port_set",
    "great_circle_error",
    "hemisphere_grid",
    "histogram_stability",
    "load_pattern_file",
    "magnetic_dipole_pattern",
    "monopole_pattern",
    "music_spectrum",
    "noise_subspace",
    "normalize",
    "rmse",
    "run_monte_carlo",
    "save_pattern_file",
    "steering_vector",
]
