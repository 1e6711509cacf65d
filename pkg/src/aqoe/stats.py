"""Work and heat statistics in the perfect-thermalisation limit.

The joint characteristic function G(alpha, alpha_bar) = <exp(i alpha w +
i alpha_bar q_h)> is known in closed form for both substances; moments are
read off by finite differences around the origin:

    <w^p q_h^s> = (-i)^(p+s) d^p/d alpha^p d^s/d alpha_bar^s G(0, 0).

All functions broadcast over numpy arrays of alpha, alpha_bar and of the
nonadiabaticity parameters, so a whole r_u grid is handled in one call.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .model import EngineConfig
from .nonadiabatic import AdiabaticityPair, adiabaticity_pair, adiabaticity_pairs

FD_STEP = 1e-3
IMAG_TOL = 1e-8
# Samples per straight path from the origin used to follow the square-root branch.
_BRANCH_SAMPLES = 9
_BRANCH_JUMP = 0.5 * math.pi

# 4th-order central stencils (offsets -2..2) for derivative orders 0, 1, 2,
# as integer weights and a common denominator.
_OFFSETS = np.arange(-2, 3)
_STENCILS = {
    0: (np.array([0, 0, 1, 0, 0]), 1),
    1: (np.array([1, -8, 0, 8, -1]), 12),
    2: (np.array([-1, 16, -30, 16, -1]), 12),
}


@dataclass(frozen=True)
class CycleStatistics:
    """First and second moments of work and hot-bath heat, and figures of merit.

    Reliability and efficiency fields are NaN outside the engine regime
    (``work_output > 0`` and ``qh_mean > 0``).
    """

    w_mean: float
    w_var: float
    qh_mean: float
    qh_var: float
    work_output: float
    reliability_w: float
    efficiency: float
    eta2: float
    reliability_eta: float
    engine_regime: bool

    @classmethod
    def from_moments(cls, w1, w2, q1, q2) -> "CycleStatistics":
        w_var = w2 - w1 * w1
        q_var = q2 - q1 * q1
        # Cancellation can leave a tiny negative variance; anything beyond
        # roundoff is a genuine inconsistency.
        for name, var, second in (("work", w_var, w2), ("heat", q_var, q2)):
            if var < -1e-9 * max(abs(second), 1.0):
                raise NumericalError(f"negative {name} variance {var:.3g}")
        w_var, q_var = max(w_var, 0.0), max(q_var, 0.0)
        work = -w1
        engine = bool(work > 0 and q1 > 0)
        nan = math.nan
        rel_w = work / math.sqrt(w_var) if engine and w_var > 0 else nan
        eff = work / q1 if engine else nan
        eta2 = w_var / q_var if engine and q_var > 0 else nan
        rel_eta = eff / math.sqrt(eta2) if engine and eta2 > 0 else nan
        return cls(float(w1), float(w_var), float(q1), float(q_var), float(work),
                   rel_w, eff, eta2, rel_eta, engine)

    def as_dict(self) -> dict:
        return asdict(self)


# --- characteristic functions ------------------------------------------------

def _tracked_sqrt(radicand, alpha, alpha_bar):
    """sqrt(radicand(alpha, alpha_bar)) on the branch continuous from the origin.

    The radicand is sampled along the straight segment from (0, 0) to each
    requested point and its phase unwrapped; a phase step larger than
    ``_BRANCH_JUMP`` between samples is treated as a tracking failure.
    """
    s = np.linspace(0.0, 1.0, _BRANCH_SAMPLES).reshape((-1,) + (1,) * np.ndim(alpha))
    path = radicand(s * alpha, s * alpha_bar)
    phase = np.angle(path)
    steps = np.diff(phase, axis=0)
    wrapped = (steps + np.pi) % (2 * np.pi) - np.pi
    if np.any(np.abs(wrapped) > _BRANCH_JUMP):
        raise NumericalError("square-root branch tracking failed: radicand phase jumps")
    start = phase[:1]
    if np.any(np.abs(start) > _BRANCH_JUMP):
        raise NumericalError("radicand at the origin is not near the positive real axis")
    phi = start[0] + np.sum(wrapped, axis=0)
    return np.sqrt(np.abs(path[-1])) * np.exp(0.5j * phi)


def _f_radicand(Q, x, y):
    return Q * (1 - x * x) * (1 - y * y) + (1 + x * x) * (1 + y * y) - 4 * x * y


def cf_ho(alpha, alpha_bar, pair, config: EngineConfig):
    """Joint characteristic function of (w, q_h) for the harmonic oscillator.

    ``pair`` supplies Q_f and Q_b (scalars or arrays broadcasting against
    alpha). G(0, 0) = 1 by construction of the prefactor
    2 (1 - e^(-beta_c omega1)) (1 - e^(-beta_h omega2)).
    """
    if not config.substance.is_ho:
        raise ValidationError("cf_ho needs a harmonic-oscillator config")
    q_f, q_b = (np.asarray(q, dtype=float) for q in pair)
    if np.any(q_f < 1 - 1e-8) or np.any(q_b < 1 - 1e-8):
        raise ValidationError("HO nonadiabaticity parameters must be >= 1")
    w1, w2, bc, bh = config.omega1, config.omega2, config.beta_c, config.beta_h
    alpha = np.asarray(alpha, dtype=complex)
    alpha_bar = np.asarray(alpha_bar, dtype=complex)

    def rad(a, ab):
        x0 = np.exp(-(1j * a + bc) * w1)
        y0 = np.exp(1j * (a - ab) * w2)
        x1 = np.exp(-(1j * (a - ab) + bh) * w2)
        y1 = np.exp(1j * a * w1)
        return _f_radicand(q_f, x0, y0) * _f_radicand(q_b, x1, y1)

    pref = 2.0 * math.expm1(-bc * w1) * math.expm1(-bh * w2)
    return pref / _tracked_sqrt(rad, alpha, alpha_bar)


def _cos_scaled(a, c):
    """cos(a + i c) / cosh(c), stable for large |c|."""
    return np.cos(a) - 1j * np.sin(a) * np.tanh(c)


def _cos_scaled_m1(a, c):
    """_cos_scaled(a, c) - 1 without cancellation near a = 0."""
    return -2 * np.sin(0.5 * a) ** 2 - 1j * np.sin(a) * np.tanh(c)


def cf_tls(alpha, alpha_bar, pair, config: EngineConfig, minus_one: bool = False):
    """Joint characteristic function of (w, q_h) for the two-level system.

    Levels are +-Delta_i with Delta_i = sqrt(omega_i^2 + delta^2); Q_f and
    Q_b are staying probabilities in [0, 1]. Evaluated in extended precision.
    With ``minus_one`` returns G - 1 formed without cancellation; derivative
    stencils sum to zero, so differencing G - 1 gives the same moments with
    rounding relative to |G - 1| instead of 1.
    """
    if config.substance.is_ho:
        raise ValidationError("cf_tls needs a two-level config")
    q_f, q_b = (np.asarray(q, dtype=float) for q in pair)
    for q in (q_f, q_b):
        if np.any(q < -1e-12) or np.any(q > 1 + 1e-12):
            raise ValidationError("TLS staying probabilities must lie in [0, 1]")
    d1, d2 = config.substance.gap(config.omega1), config.substance.gap(config.omega2)
    ld = np.longdouble
    d1, d2 = ld(d1), ld(d2)
    cc, ch = ld(config.beta_c) * d1, ld(config.beta_h) * d2
    a = np.asarray(alpha, dtype=np.clongdouble)
    ab = np.asarray(alpha_bar, dtype=np.clongdouble)
    q_f, q_b = q_f.astype(ld), q_b.astype(ld)
    f = _cos_scaled_m1 if minus_one else _cos_scaled
    x_p = f((a - ab) * d2 + a * d1, -cc)
    x_m = f((a - ab) * d2 - a * d1, cc)
    y_p = f(a * d1 + (a - ab) * d2, -ch)
    y_m = f(a * d1 - (a - ab) * d2, ch)
    # q - (q - 1) = 1, so each factor minus one keeps the same form.
    fx = q_f * x_m - (q_f - 1) * x_p
    fy = q_b * y_m - (q_b - 1) * y_p
    return fx + fy + fx * fy if minus_one else fx * fy


def characteristic_function(config: EngineConfig):
    return cf_ho if config.substance.is_ho else cf_tls


# --- moments -----------------------------------------------------------------

def _fd(G, p, s, h):
    """Tensor-product 4th-order central difference of G at the origin."""
    (cp, dp), (cs, ds) = _STENCILS[p], _STENCILS[s]
    ip, is_ = np.nonzero(cp)[0], np.nonzero(cs)[0]
    h = np.longdouble(h)
    A = (_OFFSETS[ip][:, None] * h) * np.ones(is_.size)
    B = np.ones(ip.size)[:, None] * (_OFFSETS[is_][None, :] * h)
    vals = np.asarray(G(A.ravel(), B.ravel()))
    vals = vals.reshape((ip.size, is_.size) + vals.shape[1:])
    w = np.outer(cp[ip], cs[is_]).astype(np.longdouble)
    return np.tensordot(w, vals, axes=([0, 1], [0, 1])) / (dp * ds * h ** (p + s))


def moment_with_error(G, p: int, s: int, h: float = FD_STEP, scale: float = 1.0):
    """<w^p q_h^s> and an error estimate from the Richardson difference.

    ``G(alpha, alpha_bar)`` receives 1-d arrays of stencil points and may
    return extra trailing axes (e.g. one per r_u value). ``scale`` is a
    typical energy; the imaginary-residue check is relative to
    max(|moment|, scale^(p+s)).
    """
    if p < 0 or s < 0 or p + s > 2:
        raise ValidationError("only moments with p, s >= 0 and p + s <= 2 are supported")
    if p + s == 0:
        val = np.asarray(G(np.zeros(1), np.zeros(1)))[0]
        return np.real(val), np.abs(np.imag(val))
    d1, d2, d4 = (_fd(G, p, s, k * h) for k in (1, 2, 4))
    # Two Richardson levels remove the h^4 and h^6 terms of the stencil error.
    r1, r2 = (16 * d1 - d2) / 15, (16 * d2 - d4) / 15
    d = ((64 * r1 - r2) / 63).astype(complex)
    m = (-1j) ** (p + s) * d
    err = np.abs(d - r1).astype(float)
    mag = np.maximum(np.abs(m.real), scale ** (p + s))
    if np.any(np.abs(m.imag) > IMAG_TOL * mag):
        worst = float(np.max(np.abs(m.imag) / mag))
        raise NumericalError(f"moment ({p},{s}) has imaginary residue {worst:.3g} x magnitude")
    return m.real, err


def moments(G, p: int, s: int, h: float = FD_STEP, scale: float = 1.0):
    """<w^p q_h^s> from a characteristic function G(alpha, alpha_bar)."""
    return moment_with_error(G, p, s, h, scale)[0]


def _energy_scale(config):
    if config.substance.is_ho:
        return config.omega2 - config.omega1
    return config.substance.gap(config.omega2)


def _stats_arrays(config, q_f, q_b):
    pair = (np.atleast_1d(q_f)[None, :], np.atleast_1d(q_b)[None, :])

    if config.substance.is_ho:
        def G(a, ab):
            return cf_ho(a[:, None], ab[:, None], pair, config)
    else:
        def G(a, ab):
            return cf_tls(a[:, None], ab[:, None], pair, config, minus_one=True)

    scale = _energy_scale(config)
    w1 = moments(G, 1, 0, scale=scale)
    w2 = moments(G, 2, 0, scale=scale)
    q1 = moments(G, 0, 1, scale=scale)
    q2 = moments(G, 0, 2, scale=scale)
    return w1, w2, q1, q2


def moments_perfect(config: EngineConfig, pair) -> tuple[float, float, float, float]:
    """(<w>, <w^2>, <q_h>, <q_h^2>) from the characteristic function."""
    q_f, q_b = pair
    return tuple(float(m[0]) for m in _stats_arrays(config, q_f, q_b))


def statistics_from_pair(config: EngineConfig, pair) -> CycleStatistics:
    q_f, q_b = pair
    w1, w2, q1, q2 = _stats_arrays(config, q_f, q_b)
    return CycleStatistics.from_moments(w1[0], w2[0], q1[0], q2[0])


def statistics_perfect(config: EngineConfig, pair: AdiabaticityPair | None = None) -> CycleStatistics:
    """Cycle statistics with both heat strokes fully thermalising."""
    if pair is None:
        pair = adiabaticity_pair(config)
    return statistics_from_pair(config, pair)


def statistics_perfect_grid(config: EngineConfig, r_values):
    """Statistics for every r_u in ``r_values`` at fixed tau_u.

    Returns (q_f, q_b, list of CycleStatistics); Q values are integrated in
    one batched call.
    """
    r = np.asarray(r_values, dtype=float)
    for value in r:
        config.with_(r_u=float(value))  # validates the range
    q_f, q_b = adiabaticity_pairs(config, r)
    w1, w2, q1, q2 = _stats_arrays(config, q_f, q_b)
    out = [CycleStatistics.from_moments(*v) for v in zip(w1, w2, q1, q2)]
    return q_f, q_b, out
