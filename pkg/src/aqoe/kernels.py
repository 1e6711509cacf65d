"""Population transition matrices for the four strokes.

Convention: ``T[out, in]`` is the probability of ending in level ``out``
given level ``in``; columns sum to one. HO levels are n = 0..n_cut-1, TLS
index 0 is the ground state (-Delta) and 1 the excited state (+Delta).
Truncated HO columns may sum to slightly less than one; the shortfall is
the leakage past the cutoff.
"""
from __future__ import annotations

import functools
import math

import mpmath
import numpy as np
from scipy.special import gammaln, xlogy

from .errors import NumericalError, TruncationError, ValidationError

ADIABATIC_Q_TOL = 1e-8
LEAKAGE_MAX = 1e-6
# Absolute error budget per work-stroke entry before it is re-evaluated in
# multiprecision.
_ENTRY_ABS_ERR = 1e-12


def leakage(T: np.ndarray) -> np.ndarray:
    """Per-column probability lost past the truncation (1 - column sum)."""
    return 1.0 - np.asarray(T).sum(axis=0)


def is_column_stochastic(T, tol=1e-8, leak_tol=0.0) -> bool:
    T = np.asarray(T)
    if T.min() < -1e-12 or T.max() > 1 + 1e-12:
        return False
    lk = leakage(T)
    return bool(np.all(lk > -tol) and np.all(lk < tol + leak_tol))


def gibbs_ho(beta: float, omega: float, n_cut: int) -> np.ndarray:
    """Thermal populations (1 - nu) nu^n, normalised over the untruncated ladder."""
    nu = math.exp(-beta * omega)
    return -math.expm1(-beta * omega) * nu ** np.arange(n_cut)


def gibbs_tls(beta: float, gap: float) -> np.ndarray:
    """(ground, excited) populations for levels -gap, +gap."""
    p_exc = 0.5 * (1.0 - math.tanh(beta * gap))
    return np.array([1.0 - p_exc, p_exc])


# --- HO work strokes ---------------------------------------------------------

@functools.lru_cache(maxsize=16)
def _parity_ratios(a_max, c):
    """Q-independent ratios of consecutive series terms, (a-j)(b-j)/((c+j)(j+1))."""
    ld = np.longdouble
    a = np.arange(a_max + 1)
    A, B, J = np.meshgrid(a, a, np.arange(a_max), indexing="ij")
    ratio = np.clip(A - J, 0, None) * np.clip(B - J, 0, None) / ((ld(c) + J) * (J + 1))
    ratio = ratio.astype(ld)
    weight = (np.arange(a_max + 1) + 4).astype(ld)
    sign = np.where(np.arange(a_max + 1) % 2 == 0, ld(1), ld(-1))
    half_sum = ld(0.5) * (a[:, None] + a[None, :])
    for arr in (ratio, weight, sign, half_sum):
        arr.setflags(write=False)
    return ratio, weight, sign, half_sum


def _parity_block(Q, a_max, c):
    """Hypergeometric factor for one parity class.

    The polynomial is multiplied by t^((a+b)/2), t = (Q-1)/(Q+1), so that
    nothing blows up as Q -> 1. Term j is then t^((a+b)/2) times the running
    product of term ratios times (2/(Q-1))^j, accumulated in extended
    precision (long double) with compensated summation. Returns log of the
    series scale, the scaled sum and a bound on its rounding error for
    every pair (a, b).
    """
    ld = np.longdouble
    ratio, weight, sign, half_sum = _parity_ratios(int(a_max), float(c))
    Qd = ld(Q)
    rho = 2 / (Qd - 1)
    terms = np.concatenate([np.ones(ratio.shape[:2] + (1,), dtype=ld),
                            np.cumprod(ratio * rho, axis=2)], axis=2)
    peak = terms.max(axis=2)
    mags = terms / peak[..., None]
    signed = mags * sign
    # Neumaier compensated summation over the series index.
    total = np.zeros(peak.shape, dtype=ld)
    comp = np.zeros(peak.shape, dtype=ld)
    for j in range(a_max + 1):
        x = signed[..., j]
        s = total + x
        comp += np.where(np.abs(total) >= np.abs(x), (total - s) + x, (x - s) + total)
        total = s
    total = total + comp
    # Term j carries about j + 4 ulps from the running product.
    err = np.finfo(ld).eps * (mags @ weight)
    lmax = half_sum * np.log((Qd - 1) / (Qd + 1)) + np.log(peak)
    return lmax.astype(float), total.astype(float), err.astype(float)


def _mp_parity_sum(Q, a, b, c, digits):
    """Scaled hypergeometric sum for one entry, in multiprecision."""
    with mpmath.workdps(digits):
        Q = mpmath.mpf(Q)
        t = (Q - 1) / (Q + 1)
        s = -2 / (Q + 1)
        total = mpmath.fsum(
            mpmath.rf(-a, j) * mpmath.rf(-b, j) / (mpmath.rf(c, j) * mpmath.factorial(j))
            * s**j * t ** (mpmath.mpf(a + b) / 2 - j)
            for j in range(min(a, b) + 1))
        return total


def ho_unitary_kernel(Q: float, n_cut: int, check_leakage: bool = True) -> np.ndarray:
    """HO work-stroke transition probabilities for nonadiabaticity Q >= 1.

    Parity-resolved terminating 2F1 closed form (even-even and odd-odd
    blocks, zero otherwise). Sums are accumulated with compensation; entries
    whose estimated absolute error exceeds ``_ENTRY_ABS_ERR`` after
    cancellation are recomputed with mpmath.
    """
    if n_cut < 2 or int(n_cut) != n_cut:
        raise ValidationError(f"n_cut must be an integer >= 2, got {n_cut}")
    if not Q >= 1 - ADIABATIC_Q_TOL:
        raise ValidationError(f"HO nonadiabaticity Q must be >= 1, got {Q}")
    T = np.zeros((n_cut, n_cut))
    if abs(Q - 1.0) < ADIABATIC_Q_TOL:
        np.fill_diagonal(T, 1.0)
        return T
    for parity, c in ((0, 0.5), (1, 1.5)):
        levels = np.arange(parity, n_cut, 2)
        if levels.size == 0:
            continue
        a = np.arange(levels.size)
        if parity == 0:
            # sqrt(2/(Q+1)) Gamma((m+1)/2) Gamma((n+1)/2) / (pi Gamma(m/2+1) Gamma(n/2+1))
            lg = gammaln(a + 0.5) - gammaln(a + 1.0)
            log_pref = 0.5 * math.log(2.0 / (Q + 1.0)) - math.log(math.pi)
        else:
            # 2^(7/2) (Q+1)^(-3/2) Gamma(m/2+1) Gamma(n/2+1) / (pi Gamma((m+1)/2) Gamma((n+1)/2))
            lg = gammaln(a + 1.5) - gammaln(a + 1.0)
            log_pref = 3.5 * math.log(2.0) - 1.5 * math.log(Q + 1.0) - math.log(math.pi)
        lmax, total, err = _parity_block(Q, levels.size - 1, c)
        scale = np.exp(log_pref + lg[:, None] + lg[None, :] + 2.0 * lmax)
        block = scale * total**2
        # The closed form is symmetric in (m, n); mirror so that holds exactly.
        block = np.triu(block) + np.triu(block, 1).T
        abs_err = scale * err * (2.0 * np.abs(total) + err)
        for ia, ib in np.argwhere(abs_err > _ENTRY_ABS_ERR):
            if ib < ia:
                continue
            lost = err[ia, ib] / (np.finfo(np.longdouble).eps * max(abs(total[ia, ib]), 1e-60))
            digits = 20 + int(min(math.log10(1.0 + lost), 60))
            exact = _mp_parity_sum(Q, int(ia), int(ib), c, digits)
            with mpmath.workdps(digits):
                v = mpmath.mpf(scale[ia, ib]) * (exact * mpmath.exp(-lmax[ia, ib])) ** 2
            block[ia, ib] = block[ib, ia] = float(v)
        T[np.ix_(levels, levels)] = block
    if check_leakage:
        lk = leakage(T)[: n_cut // 2]
        if lk.max() > LEAKAGE_MAX:
            raise TruncationError(
                f"work-stroke kernel leaks {lk.max():.3g} > {LEAKAGE_MAX} from level "
                f"{int(lk.argmax())} at Q={Q:.6g}; increase n_cut (now {n_cut})"
            )
    return T


# --- HO heat strokes ---------------------------------------------------------

def _thermal_params(tau, omega, beta, rate):
    if tau < 0:
        raise ValidationError(f"stroke duration must be >= 0, got {tau}")
    if rate <= 0:
        raise ValidationError(f"damping rate must be > 0, got {rate}")
    theta = math.exp(-2.0 * rate * tau)
    nu = math.exp(-beta * omega)
    return theta, nu


def ho_thermal_kernel(tau: float, omega: float, beta: float, kappa: float, n_cut: int) -> np.ndarray:
    """Population transfer of a damped HO in contact with a bath for time ``tau``.

    Evaluated as a pure-loss channel (transmissivity theta/g) followed by a
    quantum-limited amplifier (gain g = 1 + (1 - theta) nbar), with
    theta = exp(-2 kappa tau). Both factors are sums of positive terms, so
    the product is free of the cancellation that plagues the alternating
    closed-form series at small theta; ``ho_thermal_kernel_series`` gives the
    same matrix from that series.
    """
    theta, nu = _thermal_params(tau, omega, beta, kappa)
    if tau == 0:
        return np.eye(n_cut)
    nbar = nu / -math.expm1(-beta * omega)
    g = 1.0 + (1.0 - theta) * nbar
    eta = theta / g
    n = np.arange(n_cut)
    out, inp = np.meshgrid(n, n, indexing="ij")
    lower = out <= inp
    k = np.where(lower, out, 0)
    # loss: L[j, l] = C(l, j) eta^j (1 - eta)^(l - j)
    log_binom_l = gammaln(inp + 1) - gammaln(k + 1) - gammaln(inp - k + 1)
    log_loss = log_binom_l + xlogy(k, eta) + xlogy(inp - k, 1.0 - eta)
    loss = np.where(lower, np.exp(log_loss), 0.0)
    # amplifier: A[n, j] = C(n, j) g^-(j+1) (1 - 1/g)^(n - j),  n >= j
    upper = out >= inp
    kk = np.where(upper, out - inp, 0)
    log_binom_a = gammaln(out + 1) - gammaln(inp + 1) - gammaln(kk + 1)
    log_amp = log_binom_a - (inp + 1) * math.log(g) + xlogy(kk, 1.0 - 1.0 / g)
    amp = np.where(upper, np.exp(log_amp), 0.0)
    return amp @ loss


def ho_thermal_kernel_series(tau, omega, beta, kappa, n_cut, dps=None) -> np.ndarray:
    """Closed-form alternating series for the HO heat-stroke kernel.

    With ``dps=None`` the sum runs in floats and raises NumericalError when
    cancellation drives an entry negative; pass ``dps`` to evaluate with
    mpmath at that many digits instead.
    """
    theta, nu = _thermal_params(tau, omega, beta, kappa)
    if tau == 0:
        return np.eye(n_cut)
    T = np.empty((n_cut, n_cut))
    if dps is None:
        x = (1 - theta) / (1 - theta * nu)
        y = (1 - theta / nu) / (1 - theta)
        pref = (1 - nu) / (1 - nu * theta)
        for n in range(n_cut):
            for l in range(n_cut):
                s = math.fsum(
                    (-1) ** i * math.exp(math.lgamma(n + l - i + 1) - math.lgamma(n - i + 1)
                                         - math.lgamma(l - i + 1) - math.lgamma(i + 1))
                    * x ** (n + l - i) * y**i
                    for i in range(min(n, l) + 1))
                T[n, l] = pref * nu**n * s
        if T.min() < -1e-12:
            raise NumericalError(
                f"series cancellation produced entry {T.min():.3g} < 0; retry with dps set"
            )
        return T
    with mpmath.workdps(dps):
        th, v = mpmath.exp(-2 * mpmath.mpf(kappa) * tau), mpmath.exp(-mpmath.mpf(beta) * omega)
        x = (1 - th) / (1 - th * v)
        y = (1 - th / v) / (1 - th)
        pref = (1 - v) / (1 - v * th)
        f = mpmath.factorial
        for n in range(n_cut):
            for l in range(n_cut):
                s = mpmath.fsum((-1) ** i * f(n + l - i) / (f(n - i) * f(l - i) * f(i))
                                * x ** (n + l - i) * y**i for i in range(min(n, l) + 1))
                T[n, l] = float(pref * v**n * s)
    return T


# --- TLS ---------------------------------------------------------------------

def tls_unitary_kernel(Q: float) -> np.ndarray:
    if not 0.0 <= Q <= 1.0:
        raise ValidationError(f"TLS staying probability must lie in [0, 1], got {Q}")
    return np.array([[Q, 1.0 - Q], [1.0 - Q, Q]])


def tls_thermal_kernel(tau: float, Delta: float, beta: float, gamma: float) -> np.ndarray:
    """Two-level heat stroke: exact solution of the population rate equation.

    Levels +-Delta exchange quanta 2 Delta with a bosonic bath of occupation
    mbar = 1/(exp(2 beta Delta) - 1): decay rate 2 gamma (mbar + 1),
    excitation rate 2 gamma mbar. Populations relax towards the Gibbs state
    at rate 2 gamma (2 mbar + 1).
    """
    if tau < 0:
        raise ValidationError(f"stroke duration must be >= 0, got {tau}")
    if gamma <= 0:
        raise ValidationError(f"damping rate must be > 0, got {gamma}")
    x = 2.0 * beta * Delta
    # 2 mbar + 1 = coth(beta Delta)
    rate = 2.0 * gamma / math.tanh(0.5 * x)
    decay = -math.expm1(-rate * tau) if math.isfinite(tau) else 1.0
    p_exc = gibbs_tls(beta, Delta)[1]
    return np.array([[1.0 - p_exc * decay, (1.0 - p_exc) * decay],
                     [p_exc * decay, 1.0 - (1.0 - p_exc) * decay]])
