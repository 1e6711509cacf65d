"""Nonadiabaticity parameters Q_f, Q_b from numerical propagation.

HO: Q is assembled from the two fundamental solutions of the classical
equation of motion X'' + omega^2(t) X = 0. TLS: Q is the staying
probability in the instantaneous eigenstate of omega(t) sz + delta sx.

Both are integrated in rescaled time s = t / duration on [0, 1] with an
adaptive 8th-order Runge-Kutta (DOP853). The batched variants integrate a
whole vector of linear-protocol durations in one call, which is what the
sweeps use.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import NumericalError, ValidationError
from .model import EngineConfig, LinearProtocol, WorkProtocol, make_linear_protocol

DEFAULT_TOL = 1e-10
# Absolute Wronskian / norm drift accepted at the end of a stroke.
DRIFT_TOL = 1e-8


@dataclass(frozen=True)
class AdiabaticityPair:
    """(Q_f, Q_b) for the compression and expansion strokes."""

    q_f: float
    q_b: float

    def __iter__(self):
        yield self.q_f
        yield self.q_b


class _Cache:
    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            return self._data.get(key)

    def put(self, key, value):
        with self._lock:
            self._data[key] = value

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


_cache = _Cache()


def clear_cache():
    _cache.clear()


def _solve(rhs, y0, tol):
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=tol, atol=tol * 1e-3)
    if not sol.success:
        raise NumericalError(f"integration failed: {sol.message} (nfev={sol.nfev})")
    return sol.y[:, -1]


def _ho_q_from_state(X, V, Y, U, ws, we):
    return (ws**2 * (we**2 * X**2 + V**2) + (we**2 * Y**2 + U**2)) / (2 * ws * we)


def _check_ho(q, wronskian, tol, what):
    drift = np.max(np.abs(np.asarray(wronskian) - 1.0))
    if drift > DRIFT_TOL:
        raise NumericalError(f"{what}: Wronskian drift {drift:.3g} exceeds {DRIFT_TOL}")
    if np.min(q) < 1 - 10 * tol:
        raise NumericalError(f"{what}: Q = {np.min(q)!r} < 1 beyond tolerance")


def _protocol_key(kind, protocol, delta, tol):
    return (kind, protocol.family, protocol.omega_start, protocol.omega_end,
            delta, protocol.duration, tol)


def ho_Q(protocol: WorkProtocol, tol: float = DEFAULT_TOL) -> float:
    """Q(duration, omega_start, omega_end) >= 1 for the harmonic oscillator."""
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    cacheable = isinstance(protocol, LinearProtocol)
    key = _protocol_key("ho", protocol, 0.0, tol)
    if cacheable and (hit := _cache.get(key)) is not None:
        return hit
    d, ws, we = protocol.duration, protocol.omega_start, protocol.omega_end

    def rhs(s, y):
        w2 = protocol.omega_sq(s * d)
        return [d * y[1], -d * w2 * y[0], d * y[3], -d * w2 * y[2]]

    X, V, Y, U = _solve(rhs, [0.0, 1.0, 1.0, 0.0], tol)
    q = float(_ho_q_from_state(X, V, Y, U, ws, we))
    _check_ho(q, V * Y - X * U, tol, f"HO stroke {ws}->{we}, duration {d}")
    if cacheable:
        _cache.put(key, q)
    return q


def _eigvec_plus(omega, delta):
    """Upper eigenvector of omega sz + delta sx."""
    half = 0.5 * math.atan2(delta, omega)
    return math.cos(half), math.sin(half)


def _tls_rhs(d, omega_of_s, delta, n):
    scale = np.tile(np.broadcast_to(np.asarray(d, dtype=float), (n,)), 4)

    def rhs(s, y):
        ar, ai, br, bi = y.reshape(4, n)
        w = omega_of_s(s)
        # i dpsi/ds = d * H psi,  H = [[w, delta], [delta, -w]]
        return scale * np.concatenate([w * ai + delta * bi, -(w * ar + delta * br),
                                   delta * ai - w * bi, -(delta * ar - w * br)])
    return rhs


def _tls_staying(y_end, n, omega_end, delta):
    ar, ai, br, bi = y_end.reshape(4, n)
    c, s = _eigvec_plus(omega_end, delta)
    amp_r, amp_i = c * ar + s * br, c * ai + s * bi
    norm = ar**2 + ai**2 + br**2 + bi**2
    return amp_r**2 + amp_i**2, norm


def tls_Q(protocol: WorkProtocol, delta: float, tol: float = DEFAULT_TOL) -> float:
    """Staying probability |<omega_end,+| U |omega_start,+>|^2 of the TLS."""
    if delta <= 0:
        raise ValidationError("delta must be > 0")
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    cacheable = isinstance(protocol, LinearProtocol)
    key = _protocol_key("tls", protocol, delta, tol)
    if cacheable and (hit := _cache.get(key)) is not None:
        return hit
    d = protocol.duration
    c, s = _eigvec_plus(protocol.omega_start, delta)
    rhs = _tls_rhs(d, lambda x: np.sqrt(protocol.omega_sq(x * d)), delta, 1)
    y = _solve(rhs, [c, 0.0, s, 0.0], tol)
    q, norm = _tls_staying(y, 1, protocol.omega_end, delta)
    drift = abs(float(norm[0]) - 1.0)
    if drift > DRIFT_TOL:
        raise NumericalError(f"TLS propagation: norm drift {drift:.3g} exceeds {DRIFT_TOL}")
    q = float(min(max(q[0], 0.0), 1.0))
    if cacheable:
        _cache.put(key, q)
    return q


def _linear_batch(kind, durations, omega_start, omega_end, delta, tol):
    durations = np.asarray(durations, dtype=float)
    if durations.ndim != 1 or durations.size == 0:
        raise ValidationError("durations must be a non-empty 1-d array")
    if np.any(durations <= 0) or not np.all(np.isfinite(durations)):
        raise ValidationError("durations must be finite and > 0")
    key = (kind + "-batch", omega_start, omega_end, delta, tuple(durations.tolist()), tol)
    if (hit := _cache.get(key)) is not None:
        return hit.copy()
    n = durations.size
    a, b = omega_start**2, omega_end**2 - omega_start**2
    if kind == "ho":
        def rhs(s, y):
            X, V, Y, U = y.reshape(4, n)
            w2 = a + b * s
            return np.concatenate([durations * V, -durations * w2 * X,
                                   durations * U, -durations * w2 * Y])

        y0 = np.concatenate([np.zeros(n), np.ones(n), np.ones(n), np.zeros(n)])
        X, V, Y, U = _solve(rhs, y0, tol).reshape(4, n)
        q = _ho_q_from_state(X, V, Y, U, omega_start, omega_end)
        _check_ho(q, V * Y - X * U, tol, f"HO batch {omega_start}->{omega_end}")
    else:
        c, s = _eigvec_plus(omega_start, delta)
        rhs = _tls_rhs(durations, lambda x: math.sqrt(a + b * x), delta, n)
        y0 = np.concatenate([np.full(n, c), np.zeros(n), np.full(n, s), np.zeros(n)])
        q, norm = _tls_staying(_solve(rhs, y0, tol), n, omega_end, delta)
        drift = np.max(np.abs(norm - 1.0))
        if drift > DRIFT_TOL:
            raise NumericalError(f"TLS batch: norm drift {drift:.3g} exceeds {DRIFT_TOL}")
        q = np.clip(q, 0.0, 1.0)
    _cache.put(key, q)
    return q.copy()


def ho_Q_linear(durations, omega_start, omega_end, tol=DEFAULT_TOL) -> np.ndarray:
    """Vectorised HO Q for linear-in-omega^2 protocols of the given durations."""
    return _linear_batch("ho", durations, omega_start, omega_end, 0.0, tol)


def tls_Q_linear(durations, omega_start, omega_end, delta, tol=DEFAULT_TOL) -> np.ndarray:
    """Vectorised TLS staying probability for linear-in-omega^2 protocols."""
    if delta <= 0:
        raise ValidationError("delta must be > 0")
    return _linear_batch("tls", durations, omega_start, omega_end, delta, tol)


def adiabaticity_pair(config: EngineConfig, tol: float = DEFAULT_TOL) -> AdiabaticityPair:
    """Q_f for omega1 -> omega2 over r_u tau_u, Q_b for omega2 -> omega1 over (1 - r_u) tau_u."""
    fwd = make_linear_protocol(config.omega1, config.omega2, config.compression_time)
    bwd = make_linear_protocol(config.omega2, config.omega1, config.expansion_time)
    if config.substance.is_ho:
        return AdiabaticityPair(ho_Q(fwd, tol), ho_Q(bwd, tol))
    return AdiabaticityPair(tls_Q(fwd, config.delta, tol), tls_Q(bwd, config.delta, tol))


def adiabaticity_pairs(config: EngineConfig, r_values, tol: float = DEFAULT_TOL):
    """Arrays (Q_f, Q_b) over a grid of r_u values at fixed tau_u."""
    r = np.asarray(r_values, dtype=float)
    fwd_t, bwd_t = r * config.tau_u, (1 - r) * config.tau_u
    w1, w2 = config.omega1, config.omega2
    if config.substance.is_ho:
        return ho_Q_linear(fwd_t, w1, w2, tol), ho_Q_linear(bwd_t, w2, w1, tol)
    d = config.delta
    return tls_Q_linear(fwd_t, w1, w2, d, tol), tls_Q_linear(bwd_t, w2, w1, d, tol)
