import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.constants import h, pi

from mbeon.pep import fit_loss_model, solve_pep
from mbeon.physics import (
    ChannelGrid,
    db_to_lin,
    dbm_to_w,
    default_fiber,
    effective_beta2,
    pair_gamma,
    span_of,
)
from mbeon.qot import (
    DEFAULT_NLI,
    NO_PENALTIES,
    AsymptoticXPMEstimator,
    NLIEstimator,
    PenaltyConfig,
    TransceiverSpec,
    amplifier_gains,
    ase_power,
    breakdown_from_powers,
    channel_bandwidth_and_rate,
    lightpath_gsnr,
    modulation_from_gsnr,
    nli_power,
    span_gsnr,
)


def one_channel(f=193.4e12):
    return ChannelGrid(np.array([f]), ("C",), np.array([75e9]), 75e9)


def propagate(grid, length_km=70, p_dbm=0.0, fiber=None):
    span = span_of(length_km, fiber or default_fiber())
    pep = solve_pep(np.full(grid.n_channels, dbm_to_w(p_dbm)), span, grid)
    return span, pep, fit_loss_model(pep, grid)


# --- ASE --------------------------------------------------------------------

def test_ase_example():
    p = ase_power(db_to_lin(20.0), db_to_lin(4.5), 193.4e12, 64e9)
    assert p == pytest.approx(2.29e-6, rel=2e-3)
    assert p == pytest.approx(2.2883774934519933e-06, rel=1e-12)


def test_ase_unity_gain_is_zero():
    assert ase_power(1.0, db_to_lin(5.0), 193.4e12, 64e9) == 0.0


def test_ase_rejects_attenuating_amplifier():
    with pytest.raises(ValueError):
        ase_power(0.5, 2.0, 193e12, 64e9)


@given(rs=st.floats(1e9, 200e9), k=st.floats(0.1, 10))
def test_ase_linear_in_symbol_rate(rs, k):
    a = ase_power(50.0, 3.0, 195e12, rs)
    assert ase_power(50.0, 3.0, 195e12, k * rs) == pytest.approx(k * a, rel=1e-12)
    assert a == pytest.approx(3.0 * h * 195e12 * 49 * rs, rel=1e-12)


def test_amplifier_gain_and_clamp():
    g, clamped = amplifier_gains([1e-5, 2e-3], [1e-3, 1e-3], extra_loss_db=0.5)
    assert g[0] == pytest.approx(20.5)
    assert g[1] == 0.0 and clamped.tolist() == [False, True]
    with pytest.raises(ValueError):
        amplifier_gains([0.0], [1e-3])


# --- NLI --------------------------------------------------------------------

def test_nli_zero_without_power(lcs_grid):
    span, pep, fit = propagate(lcs_grid)
    np.testing.assert_array_equal(DEFAULT_NLI(span, fit, lcs_grid, np.zeros(lcs_grid.n_channels)), 0)


def test_nli_single_channel_spm_closed_form():
    grid = one_channel()
    span, pep, fit = propagate(grid)
    f, b = grid.frequencies[0], grid.bandwidths[0]
    gam = pair_gamma(span.fiber, f, f)
    b2 = abs(effective_beta2(span.fiber, f, f))
    leff = fit.effective_length(span.length)[0]
    lbar = 1 / fit.alpha0[0]
    expect = (16 / 27) * gam**2 * leff**2 * np.arcsinh(pi**2 / 2 * b2 * lbar * b**2) / (
        pi * b2 * lbar * b**2) * 1e-9
    assert nli_power(span, fit, grid, [1e-3], 0) == pytest.approx(expect, rel=1e-12)


@pytest.fixture(scope="module")
def c_prop(c_grid):
    return propagate(c_grid)


@given(scale=st.floats(0.1, 10))
def test_nli_cubic_scaling(c_grid, c_prop, scale):
    span, pep, fit = c_prop
    p = np.full(c_grid.n_channels, 1e-3)
    base = DEFAULT_NLI(span, fit, c_grid, p)
    np.testing.assert_allclose(DEFAULT_NLI(span, fit, c_grid, scale * p), scale**3 * base, rtol=1e-10)


def test_nli_doubling_power_gives_eight_times(c_grid, c_prop):
    span, pep, fit = c_prop
    p = np.full(c_grid.n_channels, 1e-3)
    np.testing.assert_allclose(DEFAULT_NLI(span, fit, c_grid, 2 * p), 8 * DEFAULT_NLI(span, fit, c_grid, p),
                               rtol=1e-12)


def test_nli_centre_channel_worst_in_flat_c_band(c_grid, c_prop):
    span, pep, fit = c_prop
    nli = DEFAULT_NLI(span, fit, c_grid, np.full(c_grid.n_channels, 1e-3))
    assert nli[c_grid.n_channels // 2] > nli[0]
    assert nli[c_grid.n_channels // 2] > nli[-1]


def test_xpm_far_field_decay():
    gam, b2, leff, lbar, b = 1.3e-3, 21.7e-27, 21e3, 21.7e3, 75e9
    for df in (2e12, 8e12):
        eta = NLIEstimator.xpm(gam, b2, leff, lbar, b, b, df)
        far = (16 / 27) * gam**2 * leff**2 / (pi * b2 * lbar * b * df)
        assert eta == pytest.approx(far, rel=1e-3)


def test_xpm_even_in_frequency_offset():
    args = (1.3e-3, 21.7e-27, 21e3, 21.7e3, 75e9, 75e9)
    # psi only depends on |df|; mirroring the band edges must give the same weight
    k = pi**2 * 21.7e-27 * 21.7e3 * 75e9
    psi = lambda d: np.arcsinh(k * (d + 37.5e9)) - np.arcsinh(k * (d - 37.5e9))
    assert psi(300e9) == pytest.approx(psi(-300e9), rel=1e-12)
    assert NLIEstimator.xpm(*args, 300e9) > NLIEstimator.xpm(*args, 600e9) > 0


def test_asymptotic_xpm_more_pessimistic(lcs_grid):
    span, pep, fit = propagate(lcs_grid)
    p = pep.launch
    assert np.all(AsymptoticXPMEstimator()(span, fit, lcs_grid, p) > DEFAULT_NLI(span, fit, lcs_grid, p))


def test_custom_estimator_callable(c_grid, c_prop):
    span, pep, fit = c_prop
    trx = TransceiverSpec()
    bd = span_gsnr(span, pep, fit, c_grid, trx, estimator=lambda *a: np.zeros(c_grid.n_channels))
    np.testing.assert_allclose(bd.gsnr, bd.osnr)


# --- span / lightpath GSNR --------------------------------------------------

def test_breakdown_example():
    bd = breakdown_from_powers(1e-3, 5e-6, 5e-6)
    assert bd.gsnr[0] == pytest.approx(20.0, abs=1e-12)
    assert bd.osnr[0] == pytest.approx(23.0103, abs=1e-4)


def test_span_gsnr_consistency(lcs_grid):
    span, pep, fit = propagate(lcs_grid, p_dbm=1.0)
    bd = span_gsnr(span, pep, fit, lcs_grid, TransceiverSpec())
    assert np.all(bd.osnr >= bd.gsnr)
    np.testing.assert_allclose(bd.signal, pep.launch)
    nf = span.noise_figures_linear(lcs_grid)
    np.testing.assert_allclose(
        bd.p_ase, nf * h * lcs_grid.frequencies * (db_to_lin(bd.gain_db) - 1) * 64e9, rtol=1e-12)


def test_span_gsnr_target_sets_gain(c_grid, c_prop):
    span, pep, fit = c_prop
    target = pep.launch * 2
    bd = span_gsnr(span, pep, fit, c_grid, TransceiverSpec(), target=target)
    base = span_gsnr(span, pep, fit, c_grid, TransceiverSpec())
    np.testing.assert_allclose(bd.gain_db - base.gain_db, 10 * np.log10(2), atol=1e-12)


def test_lightpath_examples():
    sp = breakdown_from_powers(1e-3, 5e-6, 5e-6)
    assert lightpath_gsnr([sp, sp], 0) == pytest.approx(16.9897, abs=1e-4)
    pen = PenaltyConfig(0.5, 1.0)
    assert lightpath_gsnr([sp], 0, pen, roadm_hops=2) == pytest.approx(18.0, abs=1e-12)
    assert lightpath_gsnr([sp], 0, PenaltyConfig(0.5, 1.0, filtering_per_hop=False),
                          roadm_hops=5) == pytest.approx(18.5, abs=1e-12)


def test_lightpath_transceiver_term():
    sp = breakdown_from_powers(1e-3, 0.0, 1e-6)  # 30 dB line
    g = lightpath_gsnr([sp], 0, trx=TransceiverSpec(snr_trx=30.0))
    assert g == pytest.approx(30 - 10 * math.log10(2), abs=1e-12)
    assert lightpath_gsnr([sp], 0, trx=TransceiverSpec(snr_trx=math.inf)) == pytest.approx(30.0)


def test_lightpath_dead_channel_marker():
    sp = breakdown_from_powers([1e-3, 0.0], [1e-6, 1e-6], [0.0, 0.0])
    out = lightpath_gsnr([sp])
    assert out[0] == pytest.approx(30.0) and out[1] == -np.inf
    with pytest.raises(ValueError):
        lightpath_gsnr([])


@given(g=st.lists(st.floats(5, 40), min_size=1, max_size=8))
def test_lightpath_below_every_span(g):
    spans = [breakdown_from_powers(1.0, 1 / db_to_lin(x), 0.0) for x in g]
    assert lightpath_gsnr(spans, 0, NO_PENALTIES) <= min(g) + 1e-9


# --- transceiver ------------------------------------------------------------

def test_channel_bandwidth_and_rate():
    trx = TransceiverSpec()
    assert channel_bandwidth_and_rate(trx, 12.5e9, 6) == (75e9, 600e9)
    assert channel_bandwidth_and_rate(trx, 12.5e9, 1) == (75e9, 100e9)
    with pytest.raises(ValueError):
        channel_bandwidth_and_rate(trx, 12.5e9, 7)


@pytest.mark.parametrize("g,m", [(19.3, 6), (3.0, 0), (12.39, 3), (12.4, 4), (25.0, 6), (-np.inf, 0)])
def test_modulation_thresholds(g, m):
    assert modulation_from_gsnr(g) == m


@given(a=st.floats(-10, 40), b=st.floats(-10, 40))
def test_modulation_monotone(a, b):
    lo, hi = sorted((a, b))
    assert modulation_from_gsnr(lo) <= modulation_from_gsnr(hi)


def test_thresholds_must_increase():
    with pytest.raises(ValueError):
        TransceiverSpec(thresholds=(3.0, 2.0))


def test_penalty_draw_range(rng):
    pen = PenaltyConfig()
    draws = [pen.draw_span_loss(rng, 80) for _ in range(200)]
    assert 0.2 + 0.01 * 80 < min(draws) and max(draws) < 0.5 + 0.06 * 80
    assert np.mean(draws) == pytest.approx(0.35 + 0.035 * 80, abs=0.1)
    assert NO_PENALTIES.draw_span_loss(rng, 80) == 0.0


def test_lcs_worst_channel_in_s_band(lcs_grid, span_sweep):
    flp, _ = span_sweep[0][70]
    worst = int(np.argmin(flp.gsnr))
    assert lcs_grid.bands[worst] == "S"
