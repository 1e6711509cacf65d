"""Finite-time thermalisation: cycle transition matrix and limit-cycle statistics.

One cycle maps the populations p1 of the omega1 eigenbasis (after the cold
stroke) through compression T_I, hot contact T_h, expansion T_II and cold
contact T_c:

    T_cyc = T_c @ T_II @ T_h @ T_I.

The stationary p1 is the eigenvalue-one vector of T_cyc. Moments of
w = e_m - e_n + e_l - e_k and q_h = e_k - e_m are then exact sums over the
four measured indices (n, m, k, l), contracted stage by stage.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCycleError, NumericalError, TruncationError, ValidationError
from .kernels import (
    gibbs_ho,
    gibbs_tls,
    ho_thermal_kernel,
    ho_unitary_kernel,
    leakage,
    tls_thermal_kernel,
    tls_unitary_kernel,
)
from .model import EngineConfig
from .nonadiabatic import AdiabaticityPair, adiabaticity_pair, adiabaticity_pairs
from .stats import CycleStatistics

STATIONARY_TOL = 1e-12
MAX_ITER = 100_000
GAP_MIN = 1e-6
DEGENERACY_TOL = 1e-10
# Probability per cycle allowed to leak past the HO cutoff, weighted by the
# stationary state.
CYCLE_LEAKAGE_MAX = 1e-3


@dataclass(frozen=True)
class CycleMatrix:
    """Composed one-cycle map and its four factors, all ``[out, in]``."""

    t_cyc: np.ndarray
    t_i: np.ndarray
    t_h: np.ndarray
    t_ii: np.ndarray
    t_c: np.ndarray
    e_low: np.ndarray
    e_high: np.ndarray

    @property
    def size(self) -> int:
        return self.t_cyc.shape[0]

    def leakage(self) -> np.ndarray:
        return leakage(self.t_cyc)


@dataclass(frozen=True)
class StationaryDistribution:
    """Limit-cycle populations p1 with convergence diagnostics.

    ``residual`` is ||T p1 / |T p1| - p1||_1, ``leakage`` the probability
    lost past the cutoff per cycle in the stationary state, ``gap`` the
    estimated spectral gap 1 - |lambda_2| / lambda_1.
    """

    p1: np.ndarray
    residual: float
    leakage: float
    gap: float
    iterations: int
    method: str


def _thermal_kernels(config: EngineConfig):
    hot_t, cold_t = config.hot_time, config.cold_time
    if config.substance.is_ho:
        n = config.n_cut
        t_h = ho_thermal_kernel(hot_t, config.omega2, config.beta_h, config.kappa, n)
        t_c = ho_thermal_kernel(cold_t, config.omega1, config.beta_c, config.kappa, n)
    else:
        d1, d2 = config.substance.gap(config.omega1), config.substance.gap(config.omega2)
        t_h = tls_thermal_kernel(hot_t, d2, config.beta_h, config.gamma)
        t_c = tls_thermal_kernel(cold_t, d1, config.beta_c, config.gamma)
    return t_h, t_c


def _work_kernels(config: EngineConfig, pair):
    q_f, q_b = pair
    if config.substance.is_ho:
        n = config.n_cut
        return (ho_unitary_kernel(q_f, n, check_leakage=False),
                ho_unitary_kernel(q_b, n, check_leakage=False))
    return tls_unitary_kernel(q_f), tls_unitary_kernel(q_b)


def _energies(config: EngineConfig):
    sub = config.substance
    return sub.energies(config.omega1, config.n_cut), sub.energies(config.omega2, config.n_cut)


def build_cycle_matrix(config: EngineConfig, pair: AdiabaticityPair | None = None,
                       thermal=None) -> CycleMatrix:
    """Compose the four stroke kernels; ``thermal`` may pass cached (T_h, T_c)."""
    if pair is None:
        pair = adiabaticity_pair(config)
    t_h, t_c = thermal if thermal is not None else _thermal_kernels(config)
    t_i, t_ii = _work_kernels(config, pair)
    t_cyc = t_c @ (t_ii @ (t_h @ t_i))
    if t_cyc.min() < -1e-12:
        raise NumericalError(f"cycle matrix has negative entry {t_cyc.min():.3g}")
    e_low, e_high = _energies(config)
    return CycleMatrix(t_cyc, t_i, t_h, t_ii, t_c, e_low, e_high)


def _normalise(p):
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _spectrum(T):
    lam = np.linalg.eigvals(T)
    order = np.argsort(-np.abs(lam))
    lam = lam[order]
    lead = abs(lam[0])
    second = abs(lam[1]) if lam.size > 1 else 0.0
    return lam, lead, second


def stationary_distribution(cycle: CycleMatrix | np.ndarray, tol: float = STATIONARY_TOL,
                            max_iter: int = MAX_ITER,
                            leak_tol: float = CYCLE_LEAKAGE_MAX) -> StationaryDistribution:
    """Fixed point of the (possibly truncated) cycle map.

    Power iteration on repeated squares of T, renormalising every step
    because a truncated HO map loses a little probability per cycle. Falls
    back to a direct null-space solve when the spectral gap is below
    ``GAP_MIN``. A non-unique fixed point (leading eigenvalue degenerate)
    raises DegenerateCycleError.
    """
    T = cycle.t_cyc if isinstance(cycle, CycleMatrix) else np.asarray(cycle, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValidationError("cycle matrix must be square")
    if T.min() < -1e-12:
        raise ValidationError(f"cycle matrix has negative entry {T.min():.3g}")
    lam, lead, second = _spectrum(T)
    if lead <= 0:
        raise NumericalError("cycle matrix has no positive leading eigenvalue")
    gap = 1.0 - second / lead
    if gap < DEGENERACY_TOL:
        raise DegenerateCycleError(
            f"leading eigenvalue is degenerate (|lambda_2|/lambda_1 = {second / lead:.15g}); "
            "the stationary state is not unique"
        )

    def residual(p):
        Tp = T @ p
        return float(np.abs(Tp / Tp.sum() - p).sum())

    n = T.shape[0]
    iterations = 0
    if gap < GAP_MIN:
        A = T - lead * np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        p = _normalise(np.linalg.solve(A, b))
        method = "linear-solve"
    else:
        p = np.full(n, 1.0 / n)
        M = T.copy()
        method = "power"
        # p <- T^(2^k) p with M = T^(2^k); each step doubles the iteration count.
        while residual(p) >= tol:
            if iterations >= max_iter:
                raise NumericalError(
                    f"power iteration did not converge after {iterations} steps "
                    f"(residual {residual(p):.3g}, spectral gap estimate {gap:.3g})"
                )
            p = _normalise(M @ p)
            iterations += max(1, iterations)
            M = M @ M
            M /= M.sum(axis=0).max()
    res = residual(p)
    if res >= max(tol, 1e-8):
        raise NumericalError(
            f"stationary state residual {res:.3g} (spectral gap estimate {gap:.3g})"
        )
    lk = float(leakage(T) @ p)
    if lk > leak_tol:
        raise TruncationError(
            f"cycle leaks {lk:.3g} of the stationary probability per cycle past the "
            f"cutoff (limit {leak_tol}); increase n_cut (now {n})"
        )
    return StationaryDistribution(p, res, lk, gap, iterations, method)


# --- moments -----------------------------------------------------------------

# w = -e_n + e_m - e_k + e_l and q_h = -e_m + e_k as coefficients over (n, m, k, l).
_W = (-1.0, 1.0, -1.0, 1.0)
_QH = (0.0, -1.0, 1.0, 0.0)


def _chain(cycle: CycleMatrix, p1, powers):
    """E[e_n^a e_m^b e_k^c e_l^d] for powers (a, b, c, d), in O(n^2)."""
    a, b, c, d = powers
    lo, hi = cycle.e_low, cycle.e_high
    v = lo**a * p1
    v = hi**b * (cycle.t_i @ v)
    v = hi**c * (cycle.t_h @ v)
    v = lo**d * (cycle.t_ii @ v)
    return float(v.sum())


def moments_from_cycle(cycle: CycleMatrix, p1, p: int, s: int) -> float:
    """<w^p q_h^s> by exact summation over the four measured indices."""
    if p < 0 or s < 0 or p + s > 2:
        raise ValidationError("only moments with p, s >= 0 and p + s <= 2 are supported")
    p1 = np.asarray(p1, dtype=float)
    forms = [_W] * p + [_QH] * s
    total = 0.0
    for idx in itertools.product(range(4), repeat=len(forms)):
        coef = math.prod(f[i] for f, i in zip(forms, idx))
        if coef == 0.0:
            continue
        powers = [0, 0, 0, 0]
        for i in idx:
            powers[i] += 1
        total += coef * _chain(cycle, p1, powers)
    return total


def moments_by_summation(config: EngineConfig, pair, p1, p: int, s: int) -> float:
    """<w^p q_h^s> for the configured strokes, starting from populations ``p1``."""
    return moments_from_cycle(build_cycle_matrix(config, pair), p1, p, s)


def statistics_from_cycle(cycle: CycleMatrix, p1) -> CycleStatistics:
    m = [moments_from_cycle(cycle, p1, p, s) for p, s in ((1, 0), (2, 0), (0, 1), (0, 2))]
    return CycleStatistics.from_moments(*m)


def cold_gibbs(config: EngineConfig) -> np.ndarray:
    if config.substance.is_ho:
        return gibbs_ho(config.beta_c, config.omega1, config.n_cut)
    return gibbs_tls(config.beta_c, config.substance.gap(config.omega1))


def statistics_by_summation(config: EngineConfig, pair=None) -> CycleStatistics:
    """Perfect-thermalisation statistics by direct summation (independent route)."""
    cfg = config if config.perfect else config.with_(tau_b=math.inf)
    cycle = build_cycle_matrix(cfg, pair)
    return statistics_from_cycle(cycle, cold_gibbs(cfg))


def statistics_finite(config: EngineConfig, pair=None, thermal=None, return_state=False):
    """Limit-cycle statistics with finite heat strokes.

    With ``return_state`` also returns the StationaryDistribution.
    """
    if config.perfect:
        raise ValidationError("statistics_finite needs a finite tau_b")
    cycle = build_cycle_matrix(config, pair, thermal)
    state = stationary_distribution(cycle)
    stats = statistics_from_cycle(cycle, state.p1)
    return (stats, state) if return_state else stats


def statistics_finite_grid(config: EngineConfig, r_values):
    """Finite-thermalisation statistics over an r_u grid at fixed tau_u.

    Heat-stroke kernels do not depend on r_u and are built once. Returns
    (q_f, q_b, results) where each result is CycleStatistics or the
    exception raised at that grid point.
    """
    r = np.asarray(r_values, dtype=float)
    for value in r:
        config.with_(r_u=float(value))
    q_f, q_b = adiabaticity_pairs(config, r)
    thermal = _thermal_kernels(config)
    out = []
    for value, qf, qb in zip(r, q_f, q_b):
        try:
            out.append(statistics_finite(config.with_(r_u=float(value)), (qf, qb), thermal))
        except NumericalError as exc:
            out.append(exc)
    return q_f, q_b, out
