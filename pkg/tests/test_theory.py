import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbesim.channel import los_matrices
from tbesim.optimize import unimodality_probe
from tbesim.tbe import QPSK
from tbesim.theory import (
    EveLinkMetrics,
    InfeasibleThresholdError,
    PowerAllocation,
    UserLinkMetrics,
    auth_probabilities,
    binom_cdf,
    evaluate,
    eve_metrics,
    f_kappa,
    false_alarm_all,
    g_kappa,
    info_ratio,
    message_ser,
    projected_an_leakage,
    q_function,
    reliability_metrics,
    secrecy_rates,
    select_threshold,
    sign_flip_probability,
    tag_ser,
    ue_metrics,
)

# -- Q function and SER closed forms ---------------------------------------------------


def test_q_function_examples():
    assert q_function(0.0) == 0.5
    for x in (0.5, 1.0, 2.0):
        assert q_function(x) + q_function(-x) == pytest.approx(1.0, abs=1e-15)
    oracle = mpmath.quad(lambda t: mpmath.exp(-t**2 / 2), [1.2816, mpmath.inf]) / mpmath.sqrt(2 * mpmath.pi)
    assert q_function(1.2816) == pytest.approx(float(oracle), rel=1e-12)
    assert q_function(1.2816) == pytest.approx(0.1, abs=1e-4)


@given(a=st.floats(0.05, 1.0), sigma=st.floats(0.02, 2.0))
def test_message_ser_reduces_to_qpsk(a, sigma):
    q = q_function(a / (math.sqrt(2) * sigma))
    assert message_ser(a, 0.0, sigma) == pytest.approx(1 - (1 - q) ** 2, abs=1e-14)


def _mc_ser(rho, sigma, n, rng):
    """Independent oracle: brute-force argmin detection of c and the tag from the residual."""
    rm, rt = math.sqrt(rho), math.sqrt(1 - rho)
    c_idx = rng.integers(0, 4, n)
    t = 2.0 * rng.integers(0, 2, n) - 1
    y = rm * QPSK[c_idx] + rt * t + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    c_hat = np.argmin(np.abs(y[:, None] - rm * QPSK), axis=1)
    r = y - rm * QPSK[c_hat]
    t_hat = np.where(np.abs(r - rt) <= np.abs(r + rt), 1.0, -1.0)
    return np.mean(c_hat != c_idx), np.mean(t_hat != t)


@pytest.mark.parametrize("rho, sigma", [(0.9, 0.2), (0.95, 0.3), (0.8, 0.15), (0.99, 0.25)])
def test_ser_closed_forms_match_simulation(rho, sigma):
    n = 100_000
    pm, pt = _mc_ser(rho, sigma, n, np.random.default_rng(int(rho * 1000)))
    th_m = message_ser(math.sqrt(rho), math.sqrt(1 - rho), sigma)
    th_t = tag_ser(math.sqrt(rho), math.sqrt(1 - rho), sigma)
    assert abs(pm - th_m) <= 3 * math.sqrt(th_m * (1 - th_m) / n) + 1 / n
    assert abs(pt - th_t) <= 3 * math.sqrt(th_t * (1 - th_t) / n) + 1 / n


def test_no_tag_power_gives_tag_ser_half(cfg, scn):
    u = ue_metrics(cfg, scn.beta_tilde, PowerAllocation(1.0, 1.0))
    assert u.sinr_t == 0.0
    assert u.ser_t == pytest.approx(0.5)


def test_simplified_tag_variant():
    assert tag_ser(0.9, 0.3, 0.2, simplified=True) == q_function(0.3 / 0.2)


def test_message_ser_monotone_in_rho():
    rhos = np.linspace(0.5, 1.0, 101)
    for sigma in (0.1, 0.3):
        v = [message_ser(math.sqrt(r), math.sqrt(1 - r), sigma) for r in rhos]
        assert np.all(np.diff(v) <= 1e-15)


@pytest.mark.parametrize("sigma", [0.05, 0.1, 0.2, 0.3])
def test_tag_ser_single_valley_on_upper_rho_range(sigma):
    # below rho ~ 0.55 the tag outgrows the message and the curve falls again (see ledger)
    rhos = np.linspace(0.6, 1.0, 500)
    v = np.array([tag_ser(math.sqrt(r), math.sqrt(1 - r), sigma) for r in rhos])
    rep = unimodality_probe(v)
    assert rep.kind == "unimodal-down" and rep.sign_changes == 1
    assert 0 < int(np.argmin(v)) < len(v) - 1


def test_degenerate_user_noise_raises(cfg):
    with pytest.raises(ValueError):
        ue_metrics(cfg, math.inf, PowerAllocation(0.9, 1.0))


# -- wiretap gains ---------------------------------------------------------------------


def test_f_kappa_limits():
    M = 64
    assert f_kappa(math.inf, M, M) == pytest.approx(M)  # co-located eve sees the user's gain (see ledger)
    assert f_kappa(math.inf, 0.0, M) == 0.0
    assert f_kappa(1e12, M, M) == pytest.approx(M, rel=1e-9)
    assert f_kappa(0.0, 10.0, M) == pytest.approx(1.0)


def test_g_kappa_limits():
    M = 64
    assert g_kappa(math.inf, M, M) == 0.0
    assert g_kappa(1e12, M, M) == pytest.approx(0.0, abs=1e-10)
    assert g_kappa(1000.0, 0.0, M) == pytest.approx((1000 / 1001 * 2 * M + 2 / 1001) / M)
    assert g_kappa(1000.0, 0.0, M, "rederived") == pytest.approx(1000 / 1001 * 2 + 2 / 1001)
    with pytest.raises(ValueError):
        g_kappa(1000.0, 0.0, M, "other")


def test_projected_leakage_vanishes_in_span(cfg):
    # an eavesdropper steering vector inside span(H_LoS) with kappa = inf sees no AN
    from tbesim.channel import draw_geometry

    geom = draw_geometry(cfg, np.random.default_rng(1), "orthogonal")
    h, _ = los_matrices(cfg, geom)
    leak = projected_an_leakage(cfg.replace(rician_kappa_db=math.inf), h, h)
    np.testing.assert_allclose(leak, 0.0, atol=1e-12)
    leak = projected_an_leakage(cfg, h, h)
    # scatter only: N_AN (1 + 1) / (kappa + 1) / N_AN
    np.testing.assert_allclose(leak, 2 / (cfg.kappa + 1), rtol=1e-9)


def test_eve_degenerate_gain_returns_chance(cfg, scn):
    e = eve_metrics(cfg.replace(rician_kappa_db=math.inf), scn.beta_u, scn.alpha_e, np.zeros(4), scn.beta_tilde,
                    PowerAllocation(0.95, 1.0))
    np.testing.assert_allclose(e.ser_m, 0.75)
    np.testing.assert_allclose(e.ser_t, 0.5)


def test_an_degrades_eve_below_user_in_low_risk(scn):
    # h_EVE = 80 m, 1 deg: eve better at phi = 1, worse at small phi
    for variant in ("printed", "projected"):
        hi = evaluate(scn, PowerAllocation(0.95, 1.0), g_variant=variant)
        lo = evaluate(scn, PowerAllocation(0.95, 0.05), g_variant=variant)
        assert np.mean(hi.links.eve.ser_m) < hi.links.user.ser_m
        assert np.mean(lo.links.eve.ser_m) > lo.links.user.ser_m


# -- authentication ----------------------------------------------------------------------


def test_threshold_examples():
    assert select_threshold(8, 0.04) == 1
    assert (1 + 8) / 256 <= 0.04 < (1 + 8 + 28) / 256
    assert select_threshold(8, 1.0) == 8
    assert select_threshold(160, 1e-3) == 60
    with pytest.raises(InfeasibleThresholdError):
        select_threshold(8, 2.0**-9)


def test_threshold_is_largest_within_budget():
    for T, target, pb, pt in [(160, 1e-3, 0.01, 0.02), (64, 1e-2, 0.0, 0.5), (32, 0.2, 0.3, 0.1)]:
        eta = select_threshold(T, target, pb, pt)
        pf = false_alarm_all(T, pt, pb)
        assert pf[eta] <= target
        assert eta == T or pf[eta + 1] > target


def test_binomial_cdf_against_arbitrary_precision():
    T, eta = 160, 4
    with mpmath.workdps(50):
        p = mpmath.mpf("0.01")
        oracle = sum(mpmath.binomial(T, z) * p**z * (1 - p) ** (T - z) for z in range(eta + 1))
    assert binom_cdf(T, 0.01, eta) == pytest.approx(float(oracle), rel=1e-12)


def test_auth_trivial_examples():
    assert auth_probabilities(0.0, 0.01, 160, 3)[0] == 1.0
    assert auth_probabilities(0.3, 0.01, 160, 160)[0] == pytest.approx(1.0)
    assert auth_probabilities(0.3, 0.01, 160, 10, prior=True)[2] == 0.0


@settings(max_examples=60, deadline=None)
@given(pm=st.floats(0.0, 0.5), T=st.integers(1, 200))
def test_sign_flip_matches_closed_sum(pm, T):
    # arbitrary-precision P_b = sum_{z>=1} C(T,z) (1-P_m)^(T-z) q^(2z), q = 1 - sqrt(1-P_m)
    with mpmath.workdps(60):
        ok = mpmath.mpf(1) - mpmath.mpf(pm)
        q = mpmath.mpf(pm) / (1 + mpmath.sqrt(ok))
        oracle = mpmath.fsum(mpmath.binomial(T, z) * ok ** (T - z) * q ** (2 * z) for z in range(1, T + 1))
    assert sign_flip_probability(pm, T) == pytest.approx(float(oracle), rel=1e-9, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(pt=st.floats(0.0, 1.0), T=st.integers(1, 200), data=st.data())
def test_p_d_monotone(pt, T, data):
    eta = data.draw(st.integers(0, T - 1))
    assert binom_cdf(T, pt, eta) <= binom_cdf(T, pt, eta + 1) + 1e-15
    pt2 = data.draw(st.floats(pt, 1.0))
    assert binom_cdf(T, pt2, eta) <= binom_cdf(T, pt, eta) + 1e-12


def test_prior_variant_close_to_full(scn):
    for rho in (0.9999, 0.9995, 0.999, 0.997, 0.99, 0.95):
        p = PowerAllocation(rho, 1.0)
        m = evaluate(scn, p)
        _, pf_prior, _ = auth_probabilities(m.links.user.ser_t, m.links.user.ser_m, 160, m.eta, prior=True)
        assert abs(pf_prior - m.p_f) < 1e-3


# -- rates and reliability ----------------------------------------------------------------


def _user(sinr):
    return UserLinkMetrics(sinr, 0.0, 1.0, 0.0, 0.0)


def _eve(sinr, ser_t=0.0):
    sinr = np.atleast_1d(np.asarray(sinr, dtype=float))
    z = np.zeros_like(sinr)
    return EveLinkMetrics(sinr, z, z, z, np.full_like(sinr, ser_t), z, z, z)


def test_info_ratio_examples():
    assert info_ratio(0.25) == pytest.approx(1 + math.log2(0.75))
    assert float(info_ratio(0.25)) == pytest.approx(0.58496, abs=1e-5)
    assert info_ratio(0.5) == 0.0
    assert info_ratio(1.0) == 0.0
    assert info_ratio(0.9) == 0.0
    assert info_ratio(0.0) == 1.0


def test_secrecy_symmetric_case_is_zero():
    r, ru, re, rsec = secrecy_rates(_user(10.0), _eve([10.0] * 4), 0.8, np.full(4, 0.8))
    assert r == 0.0 and rsec == 0.0 and ru == pytest.approx(re)


def test_secrecy_without_wiretap_info_equals_user_rate():
    _, ru, re, rsec = secrecy_rates(_user(10.0), _eve([30.0] * 4), 0.9, np.zeros(4))
    assert re == 0.0 and rsec == pytest.approx(ru)
    assert ru == pytest.approx(4 * math.log2(11) * 0.9)


@settings(max_examples=100)
@given(su=st.floats(0, 1e4), se=st.lists(st.floats(0, 1e4), min_size=1, max_size=6),
       pd=st.floats(0, 1), ser_t=st.floats(0, 1))
def test_secrecy_rate_nonnegative(su, se, pd, ser_t):
    eve = _eve(se, ser_t)
    r, ru, re, rsec = secrecy_rates(_user(su), eve, pd, info_ratio(eve.ser_t))
    assert r >= 0 and rsec >= 0 and ru >= 0 and re >= 0
    assert rsec >= ru - re - 1e-12


def test_reliability_examples():
    assert reliability_metrics(0.0, 1.0, [0.1], [0.1], 160)[1] == 0.0
    assert reliability_metrics(0.0, 0.9, [0.1], [0.1], 160)[1] == pytest.approx(0.1)
    assert reliability_metrics(0.0, 1.0, [0.5] * 4, [0.5] * 4, 160)[2] == pytest.approx(0.75)
    bler, afp, _ = reliability_metrics(1e-3, 0.99, [0.0], [0.0], 160)
    assert bler == pytest.approx(1 - 0.999**160)
    assert afp == pytest.approx(1 - 0.999**160 * 0.99)


def test_evaluate_invariants(scn):
    for rho in np.linspace(0.9, 1.0, 6):
        for phi in (0.1, 0.5, 1.0):
            m = evaluate(scn, PowerAllocation(rho, phi))
            assert 0 <= m.afp <= 1 and 0 <= m.p_w <= 1 and m.r_sec >= 0
            assert m.p_f <= scn.cfg.pf_target
            for v in (m.links.user.ser_m, m.links.user.ser_t, *m.links.eve.ser_m, *m.links.eve.ser_t):
                assert 0 <= v <= 1
            assert m.r_baseline <= m.r_classic + 1e-12 or m.r_baseline <= m.r_u


def test_power_allocation_box():
    with pytest.raises(ValueError):
        PowerAllocation(0.0, 1.0)
    with pytest.raises(ValueError):
        PowerAllocation(0.5, 1.5)
    p = PowerAllocation(0.81, 0.36)
    assert (p.rho_m, p.rho_t, p.phi_s, p.phi_n) == pytest.approx((0.9, math.sqrt(0.19), 0.6, 0.8))
