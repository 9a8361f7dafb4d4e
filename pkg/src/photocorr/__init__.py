"""Higher-order photon correlations of faint quantum light.

Photon statistics of canonical states, simulated click-counting, TES and
homodyne measurements, normalized factorial moments, twin-beam moments,
nonclassicality criteria and moment-based phase-space reconstruction.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConditioningError,
    ConfigError,
    FitError,
    HeraldError,
    OracleMismatchError,
    PhotocorrError,
    ResolutionError,
    SeriesDivergenceError,
    TruncationError,
    UndefinedMomentError,
)
from .fock import (  # noqa: E402
    FockAmplitudeVector,
    JointPhotonStatistics,
    PhotonStatistics,
    fock_state,
    make_state,
    poisson_state,
    thermal_state,
)
from .moments import MomentReport, NonclassicalityVerdict, moments_from_statistics, parity  # noqa: E402

__all__ = [
    "__version__",
    "ConditioningError",
    "ConfigError",
    "FitError",
    "FockAmplitudeVector",
    "HeraldError",
    "JointPhotonStatistics",
    "MomentReport",
    "NonclassicalityVerdict",
    "OracleMismatchError",
    "PhotocorrError",
    "PhotonStatistics",
    "ResolutionError",
    "SeriesDivergenceError",
    "TruncationError",
    "UndefinedMomentError",
    "fock_state",
    "make_state",
    "moments_from_statistics",
    "parity",
    "poisson_state",
    "thermal_state",
]
