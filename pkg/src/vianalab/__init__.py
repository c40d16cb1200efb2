"""Numerical toolkit for skew products of an expanding circle map with quadratic fibres.

Submodules
----------
dynamics
    The map, its derivative, exact-angle orbits and the structural checks.
exponents
    Lyapunov exponents and the derived thermodynamic constants.
hyptimes
    Hyperbolic times, slow recurrence, backward contraction, expansiveness.
ulam
    Transfer-operator discretisation and invariant-measure proxies.
thermo
    Pressure, Gibbs measures and the entropy-gap check on finite models.
cli
    The ``vianalab`` batch front-end.
"""

__version__ = "0.1.0"

from .dynamics import MapParams, PhasePoint, misiurewicz_a0, orbit, step  # noqa: E402
from .errors import (  # noqa: E402
    ConvergenceError, InvalidParamsError, RegionExitError, UndefinedConstantError, VianaLabError,
)
from .exponents import ThermoConstants, exponent_survey, lyapunov_qr  # noqa: E402
from .hyptimes import HTParams, detect, slow_recurrence_profile  # noqa: E402
from .thermo import MarkovModel, gibbs_measure, mme_candidate, pressure  # noqa: E402
from .ulam import Grid, build_ulam, stationary  # noqa: E402

__all__ = [
    "MapParams", "PhasePoint", "misiurewicz_a0", "orbit", "step",
    "VianaLabError", "InvalidParamsError", "RegionExitError", "ConvergenceError",
    "UndefinedConstantError",
    "ThermoConstants", "exponent_survey", "lyapunov_qr",
    "HTParams", "detect", "slow_recurrence_profile",
    "MarkovModel", "gibbs_measure", "mme_candidate", "pressure",
    "Grid", "build_ulam", "stationary",
]
