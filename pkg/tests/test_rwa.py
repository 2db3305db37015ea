import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optobae import rwa
from optobae.errors import DomainError
from optobae.params import TWO_PI, cooperativity_probe, effective_linewidth, with_cooperativity
from optobae.rwa import MechSusceptibility, chi_m, heterodyne_psd, sideband_terms


def test_chi_dc_halfmax_and_conjugate():
    g = 2.0e6
    s = MechSusceptibility(g)
    assert chi_m(s, 0.0) == 2.0 / g
    assert abs(chi_m(s, g / 2)) ** 2 == pytest.approx(2.0 / g**2, rel=1e-15)
    w = np.linspace(-1e7, 1e7, 11)
    assert np.array_equal(chi_m(s, -w), np.conj(chi_m(s, w)))
    with pytest.raises(DomainError):
        MechSusceptibility(0.0)


def test_delta_zero_peak_value(fig3):
    tr = rwa.heterodyne_psd_rwa(fig3.replace(delta=0.0), grid=np.array([-1.0, 0.0, 1.0]),
                                n_bar=5.6)
    assert tr.psd[1] == pytest.approx(1 + 8 * 0.04 * 0.7 * 6.1, rel=1e-12)
    assert tr.psd[1] == pytest.approx(2.37, abs=0.005)


def test_delta_zero_closed_form(fig3):
    g = effective_linewidth(fig3)
    w = np.linspace(-5 * g, 5 * g, 101)
    psd = heterodyne_psd(w, g, 0.7, 5.6, 0.04, 0.0)
    s = MechSusceptibility(g)
    expect = 1 + 2 * 0.04 * g**2 * 0.7 * 6.1 * np.abs(chi_m(s, w)) ** 2
    assert np.allclose(psd, expect, rtol=1e-14)


def test_resolved_peak_heights():
    g, C, n, eta = 1.0, 0.7, 5.6, 0.04
    d = 100 * g
    lo = heterodyne_psd(np.array([-d, d]), g, C, n, eta, d)
    # Stokes at -d carries n+1, anti-Stokes at +d carries n; QBA adds C to each
    assert lo[0] == pytest.approx(1 + 4 * eta * C * (n + 1 + C), rel=2e-4)
    assert lo[1] == pytest.approx(1 + 4 * eta * C * (n + C), rel=2e-4)


@given(st.floats(1e3, 1e7), st.floats(0, 50))
def test_bae_term_exactly_zero_at_delta_zero(g, w_scale):
    w = np.linspace(-w_scale * g, w_scale * g, 64)
    _, _, qba = sideband_terms(w, g, 0.0)
    assert np.all(qba == 0.0)


@given(st.floats(0.5, 50), st.floats(0, 20), st.floats(0, 3), st.floats(0.01, 1))
def test_delta_reflection(delta_ratio, n, C, eta):
    g = 1e6
    d = delta_ratio * g
    w = np.linspace(-(d + 10 * g), d + 10 * g, 201)
    a, s, q = sideband_terms(w, g, d)
    a2, s2, q2 = sideband_terms(-w, g, -d)
    assert np.allclose(a, a2, rtol=1e-13) and np.allclose(s, s2, rtol=1e-13)
    assert np.allclose(q, q2, rtol=1e-12, atol=1e-30)
    # weights swap between sidebands: the psd at (w, d) equals the psd at (-w, -d)
    p1 = heterodyne_psd(w, g, C, n, eta, d)
    p2 = heterodyne_psd(-w, g, C, n, eta, -d)
    assert np.allclose(p1, p2, rtol=1e-13)
    # and the anti-Stokes term of one is the Stokes term of the reflected trace
    assert np.allclose(a, sideband_terms(w, g, -d)[1], rtol=1e-13)


@given(st.floats(0.01, 20))
def test_sideband_area_ratio(n):
    """Stokes/anti-Stokes area ratio (n+1)/n once |delta| >> Gamma."""
    g = 1.0
    d = 200.0 * g
    w = np.linspace(-2 * d, 2 * d, 400001)
    a, s, _ = sideband_terms(w, g, d)
    stokes = (n + 1) * np.trapezoid(s, w)
    anti = n * np.trapezoid(a, w)
    assert stokes / anti == pytest.approx((n + 1) / n, rel=1e-12)


def test_vacuum_far_from_sidebands():
    g, d = 1.0, 50.0
    w = np.array([-1e6, 1e6])
    assert np.allclose(heterodyne_psd(w, g, 0.7, 5.6, 0.04, d), 1.0, atol=1e-6)


def test_quadrature_psd():
    g = 2.0
    w = np.linspace(-400 * g, 400 * g, 800001)
    for n in (0.0, 3.0):
        xx = rwa.quadrature_psd(w, g, n)
        assert xx[400000] == pytest.approx((2 / g) * (2 * n + 1), rel=1e-14)
        area = np.trapezoid(xx, w) / TWO_PI
        assert area == pytest.approx(n + 0.5, rel=5e-3)


def test_rwa_domain(fig3):
    with pytest.raises(DomainError):
        rwa.heterodyne_psd_rwa(fig3.replace(probe_imbalance=0.9))
    with pytest.raises(DomainError):
        rwa.heterodyne_psd_rwa(fig3.replace(detuning_carrier=1.0))


def test_default_grid(fig3):
    tr = rwa.heterodyne_psd_rwa(fig3)
    g = effective_linewidth(fig3)
    assert len(tr) == 2001
    assert tr.freq_offsets[-1] == pytest.approx(fig3.drive.delta + 10 * g)
    assert np.all(tr.psd >= 1.0)
    assert tr.meta["generator"] == "rwa"


def test_zero_cooperativity_is_flat(fig3):
    tr = rwa.heterodyne_psd_rwa(with_cooperativity(fig3, 0.0), n_bar=5.6)
    assert np.all(tr.psd == 1.0)


def test_bad_cavity(fig3):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert rwa.bad_cavity_occupation(fig3, 10.0) == pytest.approx(
            (1.7 / (4 * 5.3)) ** 2 * 10, rel=1e-12)
        assert rwa.bad_cavity_occupation(fig3, 10.0) == pytest.approx(0.064, abs=0.001)
        assert rwa.bad_cavity_occupation(fig3, 0.0) == 0.0
    with pytest.warns(RuntimeWarning):
        rwa.bad_cavity_occupation(fig3, 100.0)


@given(st.floats(1e8, 1e10), st.floats(0.01, 5), st.floats(1.5, 8))
def test_bad_cavity_quadratic_in_kappa(kappa, C, factor):
    from optobae.params import CavityParams, SystemParams
    from optobae.params import fig3_params
    p = fig3_params()
    mk = lambda k: SystemParams(CavityParams(k, 0.5 * k), p.mech, p.drive, p.detect)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = rwa.bad_cavity_occupation(mk(kappa), C)
        b = rwa.bad_cavity_occupation(mk(factor * kappa), C)
    assert b == pytest.approx(factor**2 * a, rel=1e-12)


def test_probe_cooperativity_used(fig3):
    tr = rwa.heterodyne_psd_rwa(fig3.replace(delta=0.0), grid=np.array([0.0]), n_bar=0.0)
    C = cooperativity_probe(fig3)
    assert tr.psd[0] == pytest.approx(1 + 8 * 0.04 * C * 0.5)
    assert math.isclose(tr.meta["cooperativity"], C)
