"""Linear instability analysis of periodic BGK waves of the 1D Vlasov-Poisson system."""

from .dispersion import (DispersionScan, GrowingMode, assemble_mode, dispersion_scalar,
                         find_growth_rate, orbit_weighted_average, reflect_mode)
from .functional import (CriterionReport, FunctionalBreakdown, IdentityViolation, Verdict,
                         criterion, criterion_from_q, lin_functional, test_function)
from .orbit import OrbitKind, OrbitTrace, classify, trace_orbit, transit, turning_point
from .profile import DistributionProfile, Family, density_moment, make_profile, q_moment
from .sturm import SpectralOrderViolation, SpectralResult, ground_state, solve_eigen, spectrum
from .wave import (AmplitudeTooLarge, BgkWave, EventNotFound, NonOscillatory, construct_wave,
                   find_equilibrium_level, uniform_wave)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeTooLarge", "BgkWave", "CriterionReport", "DispersionScan", "DistributionProfile",
    "EventNotFound", "Family", "FunctionalBreakdown", "GrowingMode", "IdentityViolation",
    "NonOscillatory", "OrbitKind", "OrbitTrace", "SpectralOrderViolation", "SpectralResult",
    "Verdict", "assemble_mode", "classify", "construct_wave", "criterion", "criterion_from_q",
    "density_moment", "dispersion_scalar", "find_equilibrium_level", "find_growth_rate",
    "ground_state", "lin_functional", "make_profile", "orbit_weighted_average", "q_moment",
    "reflect_mode", "solve_eigen", "spectrum", "test_function", "trace_orbit", "transit",
    "turning_point", "uniform_wave",
]
