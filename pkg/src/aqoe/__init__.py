"""Finite-time asymmetric quantum Otto engines: work statistics and stroke-time optimisation."""
from .errors import (
    AqoeError,
    DegenerateCycleError,
    NotEngineError,
    NumericalError,
    TruncationError,
    ValidationError,
)
from .model import HO, EngineConfig, LinearProtocol, Substance, WorkingSubstance, make_linear_protocol
from .nonadiabatic import AdiabaticityPair, adiabaticity_pair, adiabaticity_pairs, ho_Q, tls_Q
from .stats import CycleStatistics, statistics_perfect
from .cycle import build_cycle_matrix, stationary_distribution, statistics_finite
from .optimize import OptimaSeries, ScanSettings, find_cooptimal_times, scan_tau, sweep_r_u

__version__ = "0.1.0"
