import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.special import airy

from aqoe import EngineConfig, WorkingSubstance, make_linear_protocol
from aqoe.model import LinearProtocol, WorkProtocol
from aqoe.nonadiabatic import (
    adiabaticity_pair,
    adiabaticity_pairs,
    ho_Q,
    ho_Q_linear,
    tls_Q,
    tls_Q_linear,
)


def airy_Q(w0, w1, tau):
    """Q for omega^2(t) = a + b t from the Airy-function solution of x'' = -(a + b t) x."""
    a, b = w0**2, (w1**2 - w0**2) / tau
    scale = abs(b) ** (1 / 3)
    du = -b / scale**2

    def basis(t):
        u = -(a + b * t) / scale**2
        ai, aip, bi, bip = airy(u)
        return np.array([[ai, bi], [aip * du, bip * du]])

    start, end = basis(0.0), basis(tau)
    X, V = end @ np.linalg.solve(start, [0.0, 1.0])
    Y, U = end @ np.linalg.solve(start, [1.0, 0.0])
    return (w0**2 * (w1**2 * X**2 + V**2) + (w1**2 * Y**2 + U**2)) / (2 * w0 * w1)


def magnus_staying(w0, w1, tau, delta, steps=800):
    """|<+, w1| U |+, w0>|^2 by fourth-order Magnus steps for H = omega(t) sz + delta sx."""
    sz = np.diag([1.0, -1.0]).astype(complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)

    def A(t):
        w = math.sqrt(w0**2 + (w1**2 - w0**2) * t / tau)
        return -1j * (w * sz + delta * sx)

    def plus(w):
        vals, vecs = np.linalg.eigh(w * sz.real + delta * sx.real)
        return vecs[:, np.argmax(vals)]

    h = tau / steps
    c = math.sqrt(3) / 6
    psi = plus(w0).astype(complex)
    for i in range(steps):
        t = i * h
        a1, a2 = A(t + (0.5 - c) * h), A(t + (0.5 + c) * h)
        omega = 0.5 * h * (a1 + a2) + (math.sqrt(3) / 12) * h**2 * (a2 @ a1 - a1 @ a2)
        psi = expm(omega) @ psi
    return abs(np.vdot(plus(w1), psi)) ** 2


@pytest.mark.parametrize("w0,w1,tau", [(1.0, 2.0, 0.5), (1.0, 2.0, 3.0), (2.0, 1.0, 2.5),
                                       (1.0, 1.8, 7.0), (1.8, 1.0, 1.2)])
def test_ho_Q_matches_airy_solution(w0, w1, tau):
    assert ho_Q(make_linear_protocol(w0, w1, tau)) == pytest.approx(airy_Q(w0, w1, tau), rel=1e-8)


def test_ho_Q_sudden_limit():
    assert ho_Q(make_linear_protocol(1.0, 2.0, 1e-4)) == pytest.approx(1.25, abs=1e-6)


def test_ho_Q_slow_limit():
    q = ho_Q(make_linear_protocol(1.0, 2.0, 400.0))
    assert 1.0 <= q < 1.0 + 1e-4


def test_ho_Q_constant_protocol():
    assert ho_Q(make_linear_protocol(1.0, 1.0, 13.7)) == pytest.approx(1.0, abs=1e-9)


def test_ho_Q_custom_schedule():
    # omega(t) = 1 + t/tau differs from the linear-in-omega^2 family.
    p = WorkProtocol(1.0, 2.0, 3.0, lambda t: 1.0 + t / 3.0)
    q = ho_Q(p)
    assert q > 1.0
    assert q != pytest.approx(ho_Q(make_linear_protocol(1.0, 2.0, 3.0)), rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 30), st.floats(1.1, 3.0), st.booleans())
def test_ho_Q_at_least_one(tau, ratio, up):
    w0, w1 = (1.0, ratio) if up else (ratio, 1.0)
    assert ho_Q(make_linear_protocol(w0, w1, tau)) >= 1 - 1e-9


@pytest.mark.parametrize("tau", [0.3, 4.0, 12.0])
def test_ho_Q_tolerance_convergence(tau):
    p = make_linear_protocol(1.0, 2.0, tau)
    coarse, fine = ho_Q(p, tol=1e-9), ho_Q(p, tol=1e-10)
    assert abs(coarse - fine) < 10 * 1e-9


def test_ho_batch_matches_scalar():
    taus = np.array([0.2, 1.0, 3.3, 9.0])
    batch = ho_Q_linear(taus, 1.0, 2.0)
    single = [ho_Q(make_linear_protocol(1.0, 2.0, t)) for t in taus]
    assert np.allclose(batch, single, rtol=1e-9, atol=0)


# --- two-level system ------------------------------------------------------------

def test_tls_sudden_limit_is_eigenvector_overlap():
    def plus(w):
        vals, vecs = np.linalg.eigh(np.array([[w, 1.0], [1.0, -w]]))
        return vecs[:, np.argmax(vals)]

    overlap = float(np.dot(plus(1.0), plus(2.0)) ** 2)
    q = tls_Q(make_linear_protocol(1.0, 2.0, 1e-5), 1.0)
    assert q == pytest.approx(overlap, abs=1e-8)
    assert q == pytest.approx(0.9743, abs=1e-4)


def test_tls_slow_limit():
    assert tls_Q(make_linear_protocol(1.0, 2.0, 300.0), 1.0) > 1 - 1e-4


@pytest.mark.parametrize("w0,w1,tau,delta", [(1.0, 2.0, 0.7, 1.0), (2.0, 1.0, 3.0, 1.0),
                                             (1.0, 2.0, 6.0, 0.3)])
def test_tls_Q_matches_magnus_propagation(w0, w1, tau, delta):
    assert tls_Q(make_linear_protocol(w0, w1, tau), delta) == pytest.approx(
        magnus_staying(w0, w1, tau, delta), abs=1e-9)


def test_tls_staying_probabilities_equal():
    # For any 2x2 unitary |<+|U|+>| = |<-|U|->|; the oracle propagator shows it.
    w0, w1, tau, delta = 1.0, 2.0, 1.3, 1.0
    sz = np.diag([1.0, -1.0])
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    steps = 400
    U = np.eye(2, dtype=complex)
    for i in range(steps):
        t = (i + 0.5) * tau / steps
        w = math.sqrt(w0**2 + (w1**2 - w0**2) * t / tau)
        U = expm(-1j * (w * sz + delta * sx) * tau / steps) @ U
    v0 = np.linalg.eigh(w0 * sz + delta * sx)[1]
    v1 = np.linalg.eigh(w1 * sz + delta * sx)[1]
    M = v1.T @ U @ v0
    assert abs(M[1, 1]) ** 2 == pytest.approx(abs(M[0, 0]) ** 2, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 30), st.floats(1.1, 3.0), st.floats(0.1, 2.0))
def test_tls_Q_in_unit_interval(tau, ratio, delta):
    q = tls_Q(make_linear_protocol(1.0, ratio, tau), delta)
    assert 0.0 <= q <= 1.0


def test_tls_batch_matches_scalar():
    taus = np.array([0.2, 1.0, 3.3, 9.0])
    batch = tls_Q_linear(taus, 2.0, 1.0, 1.0)
    single = [tls_Q(make_linear_protocol(2.0, 1.0, t), 1.0) for t in taus]
    assert np.allclose(batch, single, rtol=0, atol=1e-9)


# --- pairs -----------------------------------------------------------------------

def test_pair_regression_fixture():
    pair = adiabaticity_pair(EngineConfig(tau_u=5.0, r_u=0.5))
    # Self-generated regression values (equal durations, reversed sweeps).
    assert pair.q_f == pytest.approx(1.0274877, abs=1e-6)
    assert pair.q_b == pytest.approx(1.0274877, abs=1e-6)
    assert pair.q_f == pytest.approx(airy_Q(1.0, 2.0, 2.5), rel=1e-8)
    assert pair.q_b == pytest.approx(airy_Q(2.0, 1.0, 2.5), rel=1e-8)


def test_pair_asymmetric_durations():
    pair = adiabaticity_pair(EngineConfig(tau_u=4.0, r_u=0.2))
    assert pair.q_f == pytest.approx(airy_Q(1.0, 2.0, 0.8), rel=1e-8)
    assert pair.q_b == pytest.approx(airy_Q(2.0, 1.0, 3.2), rel=1e-8)


def test_pair_limits():
    slow = adiabaticity_pair(EngineConfig(tau_u=1000.0))
    assert slow.q_f == pytest.approx(1.0, abs=1e-5) and slow.q_b == pytest.approx(1.0, abs=1e-5)
    fast = adiabaticity_pair(EngineConfig(tau_u=1e-4))
    assert fast.q_f == pytest.approx(1.25, abs=1e-6) and fast.q_b == pytest.approx(1.25, abs=1e-6)


def test_pairs_batch_matches_scalar():
    cfg = EngineConfig(tau_u=6.0, substance=WorkingSubstance("tls", 1.0))
    r = np.array([0.1, 0.35, 0.8])
    q_f, q_b = adiabaticity_pairs(cfg, r)
    for i, value in enumerate(r):
        pair = adiabaticity_pair(cfg.with_(r_u=value))
        assert q_f[i] == pytest.approx(pair.q_f, abs=1e-9)
        assert q_b[i] == pytest.approx(pair.q_b, abs=1e-9)


def test_linear_protocol_family_is_cached():
    p = LinearProtocol(1.0, 2.0, 2.2)
    assert ho_Q(p) == ho_Q(make_linear_protocol(1.0, 2.0, 2.2))
