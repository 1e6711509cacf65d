import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from aqoe import DegenerateCycleError, EngineConfig, NumericalError, TruncationError
from aqoe.cycle import (
    build_cycle_matrix,
    cold_gibbs,
    moments_by_summation,
    moments_from_cycle,
    stationary_distribution,
    statistics_by_summation,
    statistics_finite,
)
from aqoe.kernels import gibbs_ho, is_column_stochastic, tls_thermal_kernel
from aqoe.nonadiabatic import adiabaticity_pair
from aqoe.stats import statistics_perfect

from conftest import TLS, tls_enumeration


def matmul_loops(A, B):
    """Plain-loop 2x2 product, kept separate from numpy's matmul."""
    return [[sum(A[i][k] * B[k][j] for k in range(2)) for j in range(2)] for i in range(2)]


def tls_cycle_closed_form(config, pair):
    d1, d2 = config.substance.gap(config.omega1), config.substance.gap(config.omega2)
    q_f, q_b = pair

    def unitary(q):
        return [[q, 1 - q], [1 - q, q]]

    t_h = tls_thermal_kernel(config.hot_time, d2, config.beta_h, config.gamma).tolist()
    t_c = tls_thermal_kernel(config.cold_time, d1, config.beta_c, config.gamma).tolist()
    return matmul_loops(t_c, matmul_loops(unitary(q_b), matmul_loops(t_h, unitary(q_f)))), t_h


# --- cycle matrix ----------------------------------------------------------------

def test_perfect_thermalisation_cycle_columns_are_cold_gibbs(ho_config):
    cyc = build_cycle_matrix(ho_config.with_(tau_u=3.0, r_u=0.3))
    g = gibbs_ho(ho_config.beta_c, ho_config.omega1, ho_config.n_cut)
    assert np.allclose(cyc.t_c, g[:, None], rtol=0, atol=1e-15)
    # Columns keep the Gibbs shape, scaled by what survives truncation upstream.
    assert np.allclose(cyc.t_cyc / cyc.t_cyc.sum(axis=0), g[:, None] / g.sum(), rtol=1e-12, atol=1e-15)


def test_zero_heat_strokes_leave_unitary_composition(tls_config):
    cfg = tls_config.with_(tau_b=0.0, tau_u=2.0, r_u=0.3)
    cyc = build_cycle_matrix(cfg)
    assert np.allclose(cyc.t_cyc, cyc.t_ii @ cyc.t_i, rtol=0, atol=1e-15)
    assert np.allclose(cyc.t_cyc.sum(axis=1), 1.0) and np.allclose(cyc.t_cyc.sum(axis=0), 1.0)


@pytest.mark.parametrize("tau_b,r_b,r_u", [(3.0, 0.5, 0.3), (40.0, 0.2, 0.7), (400.0, 0.9, 0.5)])
def test_tls_cycle_matches_closed_form(tls_config, tau_b, r_b, r_u):
    cfg = tls_config.with_(tau_b=tau_b, r_b=r_b, r_u=r_u, tau_u=4.0)
    pair = adiabaticity_pair(cfg)
    cyc = build_cycle_matrix(cfg, pair)
    closed, _ = tls_cycle_closed_form(cfg, pair)
    assert np.allclose(cyc.t_cyc, closed, rtol=0, atol=1e-12)


def test_partial_products_stochastic():
    cfg = EngineConfig(tau_u=6.0, tau_b=60.0, beta_h=0.5, beta_c=1.5)
    cyc = build_cycle_matrix(cfg)
    partial = np.eye(cfg.n_cut)
    for stage in (cyc.t_i, cyc.t_h, cyc.t_ii, cyc.t_c):
        partial = stage @ partial
        assert partial.min() >= -1e-12
        assert is_column_stochastic(partial[:, :10], tol=1e-6)


# --- stationary state ----------------------------------------------------------------

def test_tls_stationary_closed_form(tls_config):
    cfg = tls_config.with_(tau_b=50.0, tau_u=3.0, r_u=0.3)
    cyc = build_cycle_matrix(cfg)
    a, b = cyc.t_cyc[0, 1], cyc.t_cyc[1, 0]
    state = stationary_distribution(cyc)
    assert np.allclose(state.p1, np.array([a, b]) / (a + b), rtol=0, atol=1e-12)


def test_perfect_thermalisation_stationary_is_gibbs(ho_config):
    cfg = ho_config.with_(tau_b=math.inf, beta_h=0.5, beta_c=1.5)
    state = stationary_distribution(build_cycle_matrix(cfg))
    assert np.allclose(state.p1, cold_gibbs(cfg), rtol=0, atol=1e-12)


def test_identity_cycle_is_degenerate():
    with pytest.raises(DegenerateCycleError):
        stationary_distribution(np.eye(3))


def test_small_gap_uses_linear_solve():
    eps = 1e-8
    T = np.array([[1 - eps, 2 * eps], [eps, 1 - 2 * eps]])
    state = stationary_distribution(T)
    assert state.method == "linear-solve"
    assert np.allclose(state.p1, [2 / 3, 1 / 3], atol=1e-10)


def test_heavy_leakage_reported():
    T = np.array([[0.5, 0.5], [0.0, 0.0]])
    with pytest.raises(TruncationError):
        stationary_distribution(T)


def test_stationary_state_fixed_point_and_normalised():
    cfg = EngineConfig(tau_u=6.0, tau_b=60.0, beta_h=0.5, beta_c=1.5)
    cyc = build_cycle_matrix(cfg)
    state = stationary_distribution(cyc)
    assert state.p1.min() >= 0 and state.p1.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.abs(cyc.t_cyc @ state.p1 - state.p1).sum() < 1e-8


# --- moments ---------------------------------------------------------------------

def test_zeroth_moment_is_total_probability():
    cfg = EngineConfig(tau_u=5.0, beta_h=0.5, beta_c=1.5)
    cyc = build_cycle_matrix(cfg)
    total = moments_from_cycle(cyc, cold_gibbs(cfg), 0, 0)
    assert total == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("tau_b", [0.0, 5.0, 80.0])
def test_tls_finite_moments_match_enumeration(tls_config, tau_b):
    cfg = tls_config.with_(tau_b=tau_b, tau_u=3.0, r_u=0.4, r_b=0.35)
    pair = adiabaticity_pair(cfg)
    closed, t_h = tls_cycle_closed_form(cfg, pair)
    a, b = closed[0][1], closed[1][0]
    p1 = [a / (a + b), b / (a + b)]
    oracle = tls_enumeration(cfg, *pair, p1=p1, t_h=t_h)
    got = [moments_by_summation(cfg, pair, p1, p, s) for p, s in ((1, 0), (2, 0), (0, 1), (0, 2))]
    assert np.allclose(got, oracle, rtol=0, atol=1e-12)
    st_ = statistics_finite(cfg, pair)
    assert st_.w_mean == pytest.approx(oracle[0], abs=1e-12)
    assert st_.qh_var == pytest.approx(oracle[3] - oracle[2] ** 2, abs=1e-12)


def test_tls_perfect_summation_matches_enumeration(tls_config):
    cfg = tls_config.with_(tau_u=2.0, r_u=0.6)
    pair = adiabaticity_pair(cfg)
    oracle = tls_enumeration(cfg, *pair)
    st_ = statistics_by_summation(cfg, pair)
    assert st_.w_mean == pytest.approx(oracle[0], abs=1e-14)
    assert st_.w_var == pytest.approx(oracle[1] - oracle[0] ** 2, abs=1e-13)


@pytest.mark.parametrize("sub", ["ho", "tls"])
def test_long_heat_strokes_reach_perfect_thermalisation(sub):
    base = EngineConfig(tau_u=3.0, r_u=0.3, beta_h=0.8, beta_c=2.0,
                        substance=TLS if sub == "tls" else EngineConfig().substance)
    # kappa tau_b = 25 on each bath.
    finite = statistics_finite(base.with_(tau_b=2 * 25 / 0.01))
    perfect = statistics_perfect(base)
    for key in ("w_mean", "w_var", "qh_mean", "qh_var"):
        assert getattr(finite, key) == pytest.approx(getattr(perfect, key), rel=1e-4)


def test_truncation_convergence_in_a_cold_engine():
    cfg = EngineConfig(tau_u=10.0, tau_b=100.0, beta_h=0.3, beta_c=1.0)
    a = statistics_finite(cfg)
    b = statistics_finite(cfg.with_(n_cut=100))
    assert a.work_output == pytest.approx(b.work_output, rel=1e-6)


def test_finite_stroke_point_regression():
    # Self-generated fixture for tau_b = 10 tau_u, r_b = 0.5, n_cut = 50.
    st_, state = statistics_finite(EngineConfig(tau_u=10.0, tau_b=100.0), return_state=True)
    assert st_.work_output == pytest.approx(1.25976903, rel=1e-6)
    assert state.leakage < 1e-4


def test_zero_heat_strokes_ho_has_no_normalisable_fixed_point():
    # Unitary strokes alone only pump energy in; the truncated map leaks.
    with pytest.raises(NumericalError):
        statistics_finite(EngineConfig(tau_u=5.0, tau_b=0.0))


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.floats(0.5, 20), st.floats(0.05, 0.95), st.floats(0.0, 500), st.floats(0.05, 0.95),
       st.floats(0.2, 2.0))
def test_tls_stationary_property(tau_u, r_u, tau_b, r_b, beta_h):
    cfg = EngineConfig(tau_u=tau_u, r_u=r_u, tau_b=tau_b, r_b=r_b, beta_h=beta_h,
                       beta_c=2 * beta_h, substance=TLS)
    cyc = build_cycle_matrix(cfg)
    try:
        state = stationary_distribution(cyc)
    except DegenerateCycleError:
        # Only an identity-like cycle is degenerate.
        assert np.allclose(cyc.t_cyc, np.eye(2), atol=1e-9)
        return
    assert state.p1.min() >= 0
    assert np.abs(cyc.t_cyc @ state.p1 - state.p1).sum() < 1e-8
