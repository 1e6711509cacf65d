"""Domain types, configuration validation and closed-form limits.

Units: frequencies in omega1, times in 1/omega1, energies in omega1,
inverse temperatures in 1/omega1 (hbar = k_B = 1). Work ``w`` is work done
on the working substance, so the engine output is ``-<w>``; heat ``q_h`` is
positive when absorbed from the hot bath.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import NotEngineError, ValidationError

WEAK_COUPLING_MAX = 0.05
R_MIN = 1e-3


class Substance(enum.Enum):
    HO = "ho"
    TLS = "tls"


@dataclass(frozen=True)
class WorkingSubstance:
    """Harmonic oscillator, or two-level system ``omega(t) sz + delta sx``."""

    kind: Substance = Substance.HO
    delta: float = 0.0

    def __post_init__(self):
        if not isinstance(self.kind, Substance):
            object.__setattr__(self, "kind", Substance(self.kind))
        if self.delta < 0:
            raise ValidationError(f"delta must be >= 0, got {self.delta}")
        if self.kind is Substance.TLS and self.delta <= 0:
            raise ValidationError("a two-level substance needs delta > 0")

    @property
    def is_ho(self) -> bool:
        return self.kind is Substance.HO

    def gap(self, omega: float) -> float:
        """Half-splitting sqrt(omega^2 + delta^2) of the TLS (levels are +-gap)."""
        return math.hypot(omega, self.delta)

    def energies(self, omega: float, n_cut: int) -> np.ndarray:
        """Energy eigenvalues in ascending order for the shared index convention."""
        if self.is_ho:
            return omega * (np.arange(n_cut) + 0.5)
        g = self.gap(omega)
        return np.array([-g, g])


HO = WorkingSubstance()


def bose_occupation(beta: float, energy: float) -> float:
    return 1.0 / math.expm1(beta * energy)


@dataclass(frozen=True)
class EngineConfig:
    """Full parameterisation of one asymmetric Otto cycle.

    ``tau_b = math.inf`` selects perfect thermalisation. ``r_u`` is the
    fraction of ``tau_u`` spent on compression, ``r_b`` the fraction of
    ``tau_b`` spent in contact with the hot bath.
    """

    omega1: float = 1.0
    omega2: float = 2.0
    beta_h: float = 0.1
    beta_c: float = 0.5
    tau_u: float = 5.0
    tau_b: float = math.inf
    r_u: float = 0.5
    r_b: float = 0.5
    kappa: float = 0.01
    gamma: float = 0.01
    n_cut: int = 50
    substance: WorkingSubstance = field(default_factory=WorkingSubstance)
    weak_coupling_max: float = WEAK_COUPLING_MAX
    r_min: float = R_MIN

    def __post_init__(self):
        if not (self.omega2 > self.omega1 > 0):
            raise ValidationError(
                f"need omega2 > omega1 > 0, got omega1={self.omega1}, omega2={self.omega2}"
            )
        if not (self.beta_c > self.beta_h > 0):
            raise ValidationError(
                f"need beta_c > beta_h > 0, got beta_h={self.beta_h}, beta_c={self.beta_c}"
            )
        if not (self.tau_u > 0 and math.isfinite(self.tau_u)):
            raise ValidationError(f"tau_u must be finite and > 0, got {self.tau_u}")
        if not self.tau_b >= 0:
            raise ValidationError(f"tau_b must be >= 0, got {self.tau_b}")
        for name in ("r_u", "r_b"):
            r = getattr(self, name)
            if not (self.r_min <= r <= 1 - self.r_min):
                raise ValidationError(
                    f"{name} must lie in [{self.r_min}, {1 - self.r_min}], got {r}"
                )
        if int(self.n_cut) != self.n_cut or self.n_cut < 2:
            raise ValidationError(f"n_cut must be an integer >= 2, got {self.n_cut}")
        if self.kappa <= 0 or self.gamma <= 0:
            raise ValidationError("damping rates kappa and gamma must be > 0")
        for name, value in self.weak_coupling_ratios().items():
            if value > self.weak_coupling_max:
                raise ValidationError(
                    f"weak-coupling ratio for the {name} bath is {value:.4g} "
                    f"> weak_coupling_max={self.weak_coupling_max}"
                )

    def weak_coupling_ratios(self) -> dict[str, float]:
        """Damping rate over transition energy, times (occupation + 1), per bath."""
        out = {}
        for name, beta, omega in (("cold", self.beta_c, self.omega1),
                                  ("hot", self.beta_h, self.omega2)):
            if self.substance.is_ho:
                out[name] = self.kappa * (bose_occupation(beta, omega) + 1) / omega
            else:
                gap = self.substance.gap(omega)
                out[name] = self.gamma * (bose_occupation(beta, 2 * gap) + 1) / gap
        return out

    @property
    def perfect(self) -> bool:
        return math.isinf(self.tau_b)

    @property
    def compression_time(self) -> float:
        return self.r_u * self.tau_u

    @property
    def expansion_time(self) -> float:
        return (1 - self.r_u) * self.tau_u

    @property
    def hot_time(self) -> float:
        return self.r_b * self.tau_b

    @property
    def cold_time(self) -> float:
        return (1 - self.r_b) * self.tau_b

    @property
    def delta(self) -> float:
        return self.substance.delta

    def with_(self, **changes) -> "EngineConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class WorkProtocol:
    """Frequency schedule omega(t) on [0, duration].

    ``family`` names the schedule shape; together with the endpoints and
    duration it identifies the protocol for caching.
    """

    omega_start: float
    omega_end: float
    duration: float
    schedule: Callable[[float], float]
    family: str = "custom"

    def __post_init__(self):
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValidationError(f"protocol duration must be finite and > 0, got {self.duration}")
        if self.omega_start <= 0 or self.omega_end <= 0:
            raise ValidationError("protocol frequencies must be > 0")
        for t, want in ((0.0, self.omega_start), (self.duration, self.omega_end)):
            got = self.schedule(t)
            if not math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-12):
                raise ValidationError(f"schedule({t}) = {got}, expected {want}")
        ts = np.linspace(0.0, self.duration, 65)
        if min(self.schedule(t) for t in ts) <= 0:
            raise ValidationError("schedule must stay positive")

    def omega_sq(self, t):
        return np.square(self.schedule(t))


@dataclass(frozen=True)
class LinearProtocol(WorkProtocol):
    """omega^2(t) linear in t; the default sweep family."""

    schedule: Callable[[float], float] = field(default=None, compare=False, repr=False)
    family: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "schedule", self.omega)
        super().__post_init__()

    def omega_sq(self, t):
        s = np.asarray(t) / self.duration
        return self.omega_start**2 + (self.omega_end**2 - self.omega_start**2) * s

    def omega(self, t):
        return np.sqrt(self.omega_sq(t))


def make_linear_protocol(omega_start: float, omega_end: float, duration: float) -> LinearProtocol:
    """Build omega^2(t) = omega_start^2 + (omega_end^2 - omega_start^2) t / duration."""
    return LinearProtocol(omega_start, omega_end, duration)


def _require_ho(config: EngineConfig):
    if not getattr(config, "substance", HO).is_ho:
        raise ValidationError("this closed form applies to the harmonic oscillator only")


def quasistatic_work_ho(config: EngineConfig) -> float:
    """Work output -<w> of the HO cycle in the adiabatic (Q_f = Q_b = 1) limit."""
    _require_ho(config)
    w1, w2 = config.omega1, config.omega2
    coth = lambda x: 1.0 / math.tanh(x)  # noqa: E731
    return 0.5 * (w2 - w1) * (coth(config.beta_h * w2 / 2) - coth(config.beta_c * w1 / 2))


def quasistatic_work_std_ho(config: EngineConfig) -> float:
    """sigma_w of the HO cycle at Q_f = Q_b = 1.

    With identity work-stroke kernels the quantum numbers before compression
    (cold Gibbs) and before expansion (hot Gibbs) are independent geometric
    variables and w = (omega2 - omega1)(n - k).
    """
    _require_ho(config)
    w1, w2 = config.omega1, config.omega2
    csch2 = lambda x: 1.0 / math.sinh(x) ** 2  # noqa: E731
    var = 0.25 * (w2 - w1) ** 2 * (csch2(config.beta_c * w1 / 2) + csch2(config.beta_h * w2 / 2))
    return math.sqrt(var)


def quasistatic_reliability_ho(config: EngineConfig) -> float:
    """R_w = -<w>/sigma_w of the HO cycle at Q_f = Q_b = 1."""
    work = quasistatic_work_ho(config)
    if work <= 0:
        raise NotEngineError(f"not in the engine regime: -<w> = {work:.6g}")
    return work / quasistatic_work_std_ho(config)


def sudden_quench_Q_ho(omega_start: float, omega_end: float) -> float:
    if omega_start <= 0 or omega_end <= 0:
        raise ValidationError("frequencies must be > 0")
    # 1 + (a - b)^2 / (2ab): never rounds below one.
    return 1.0 + (omega_start - omega_end) ** 2 / (2 * omega_start * omega_end)


def carnot_efficiency(config: EngineConfig) -> float:
    return 1.0 - config.beta_h / config.beta_c
