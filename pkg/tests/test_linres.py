import dataclasses
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optobae import linres, rwa
from optobae.errors import InstabilityError
from optobae.params import TWO_PI, DetectionParams, cooperativity_probe, effective_linewidth
from optobae.rwa import MechSusceptibility, chi_m

SYMPLECTIC = np.diag([1.0, -1.0, 1.0, -1.0])


def gauss_inverse(A):
    """Gauss-Jordan with partial pivoting, pure python complex arithmetic."""
    n = len(A)
    M = [[complex(A[i][j]) for j in range(n)] + [complex(i == j) for j in range(n)]
         for i in range(n)]
    for c in range(n):
        piv = max(range(c, n), key=lambda r: abs(M[r][c]))
        M[c], M[piv] = M[piv], M[c]
        pv = M[c][c]
        M[c] = [x / pv for x in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [x - f * y for x, y in zip(M[r], M[c])]
    return np.array([row[n:] for row in M])


def model(**kw):
    base = dict(kappa=TWO_PI * 1.7e9, gamma_eff=TWO_PI * 607e3, g_plus=TWO_PI * 13e6,
                g_minus=TWO_PI * 13e6, n_bath=5.6, delta_mech=TWO_PI * 3e6)
    base.update(kw)
    return linres.ScatteringModel(**base)


rates = st.floats(1e5, 1e9)


@given(rates, rates, st.floats(-1e8, 1e8), st.floats(-1e7, 1e7), st.floats(0, 1e7),
       st.floats(0, 1e7), st.floats(-1e8, 1e8))
def test_inverse_matches_gauss_jordan(k, g, dc, dm, gp, gm, w):
    m = linres.ScatteringModel(k, g, dc, dm, gp, gm)
    kinv = linres.chi_inverse(m, w)
    if np.linalg.cond(kinv) > 1e8:
        return
    chi = linres.chi_matrix(m, w)
    ref = gauss_inverse(kinv.tolist())
    scale = np.abs(ref).max()
    # relative 1e-12 per entry, plus a floor of a few ulps of the matrix
    # scale for entries that are themselves the result of cancellation
    err = np.abs(chi - ref)
    assert np.all(err <= 1e-12 * np.abs(ref) + 1e-15 * scale)


def test_decoupled_block_diagonal():
    m = model(g_plus=0.0, g_minus=0.0, delta_cav=TWO_PI * 5e6)
    w = TWO_PI * 0.4e6
    chi = linres.chi_matrix(m, w)
    chic = lambda x: 1.0 / (-1j * x + 0.5 * m.kappa)
    s = MechSusceptibility(m.gamma_eff)
    diag = [chic(w + m.delta_cav), chic(w - m.delta_cav),
            chi_m(s, w + m.delta_mech), chi_m(s, w - m.delta_mech)]
    assert np.allclose(np.diag(chi), diag, rtol=1e-14)
    assert np.all(chi[~np.eye(4, dtype=bool)] == 0)


def test_inverse_consistency_at_origin(fig3):
    m = linres.ScatteringModel.from_params(fig3.replace(delta=0.0))
    prod = linres.chi_matrix(m, 0.0) @ linres.chi_inverse(m, 0.0)
    assert np.abs(prod - np.eye(4)).max() < 1e-13


def test_optical_reflection():
    m = model(g_plus=0.0, g_minus=0.0)
    S = linres.output_scattering(m, 0.0)
    assert S[0, 0] == pytest.approx(-1.0, abs=1e-15)
    w = np.linspace(-5e10, 5e10, 101)
    S = linres.output_scattering(m, w)
    assert np.allclose(np.abs(S[:, 0, 0]), 1.0, atol=1e-14)


@given(st.floats(-1e9, 1e9), st.floats(0, 3e7), st.floats(0, 3e7), st.floats(-1e8, 1e8))
def test_symplectic_unitarity(w, gp, gm, dc):
    m = model(g_plus=gp, g_minus=gm, delta_cav=dc, n_bath=0.0)
    if not linres.stability_scan(m, [w]).stable:
        return
    S = linres.output_scattering(m, w)
    assert np.abs(S @ SYMPLECTIC @ S.conj().T - SYMPLECTIC).max() < 1e-9


@pytest.mark.parametrize("delta_mhz", [0.0, 1.0, 3.0])
def test_matches_rwa(fig3, delta_mhz):
    p = fig3.replace(delta=TWO_PI * delta_mhz * 1e6)
    m = linres.ScatteringModel.from_params(p, n_bar=5.6)
    grid = rwa.default_grid(m.gamma_eff, m.delta_mech)
    t0 = time.perf_counter()
    full = linres.heterodyne_psd_full(m, p.detect, grid, params=p)
    assert time.perf_counter() - t0 < 1.0
    ref = rwa.heterodyne_psd_rwa(p, grid, n_bar=5.6)
    assert np.max(np.abs(full.psd / ref.psd - 1)) < 0.01


def test_rwa_agreement_improves_with_kappa(fig3):
    p = fig3
    errs = []
    for f in (1, 10, 100):
        pk = p.replace(kappa=p.cavity.kappa * f)
        m = linres.ScatteringModel.from_params(pk, n_bar=5.6)
        # keep C fixed: rescale couplings with sqrt(kappa)
        C = cooperativity_probe(p)
        g = np.sqrt(C * m.kappa * m.gamma_eff / 4.0)
        m = dataclasses.replace(m, g_plus=g, g_minus=g)
        grid = rwa.default_grid(m.gamma_eff, m.delta_mech)
        full = linres.heterodyne_psd_full(m, p.detect, grid).psd
        ref = rwa.heterodyne_psd(grid, m.gamma_eff, C, 5.6, p.detect.eta, m.delta_mech)
        errs.append(np.max(np.abs(full / ref - 1)))
    assert errs[0] < 0.01
    assert errs[0] > errs[1] > errs[2]


def test_vacuum_only_is_flat(fig3):
    m = linres.ScatteringModel.from_params(fig3)
    m = dataclasses.replace(m, g_plus=0.0, g_minus=0.0)
    tr = linres.heterodyne_psd_full(m, fig3.detect, np.linspace(-3e7, 3e7, 301))
    assert np.allclose(tr.psd, 1.0, atol=1e-15)


def test_single_red_tone_has_no_backaction(fig3):
    """Beam-splitter coupling only: the excess is proportional to n, zero at n = 0."""
    m0 = dataclasses.replace(linres.ScatteringModel.from_params(fig3), g_plus=0.0)
    grid = np.linspace(-3e7, 3e7, 301)
    ex = {n: linres.heterodyne_psd_full(dataclasses.replace(m0, n_bath=n), fig3.detect,
                                        grid).psd - 1 for n in (0.0, 2.0, 5.0)}
    assert np.abs(ex[0.0]).max() < 1e-13
    assert np.allclose(ex[5.0], 2.5 * ex[2.0], rtol=1e-9, atol=1e-15)
    # a single Lorentzian on one side of the LO whose area follows the sideband weight
    gm = m0.g_minus
    gtot = m0.gamma_eff + 4 * gm**2 / m0.kappa
    fine = np.linspace(-m0.delta_mech - 60 * gtot, -m0.delta_mech + 60 * gtot, 40001)
    tr = linres.heterodyne_psd_full(dataclasses.replace(m0, n_bath=2.0), fig3.detect, fine)
    area = np.trapezoid(tr.psd - 1, fine) / TWO_PI
    C1 = 4 * gm**2 / (m0.kappa * m0.gamma_eff)
    expect = fig3.detect.eta * 2.0 * C1 * m0.gamma_eff**2 / gtot
    assert area == pytest.approx(expect, rel=0.02)


def test_stability():
    rep = linres.stability_scan(model(), np.linspace(-1e8, 1e8, 11))
    assert rep.stable and rep.max_growth_rate < 0
    rep = linres.stability_scan(model(g_plus=0.0, g_minus=0.0), [0.0])
    assert rep.stable and rep.condition[0] < 1e4
    blue = model(g_plus=TWO_PI * 40e6, g_minus=0.0, delta_mech=0.0)
    assert not linres.stability_scan(blue, [0.0]).stable
    with pytest.raises(InstabilityError) as exc:
        linres.heterodyne_psd_full(blue, DetectionParams(0.04, TWO_PI * 100e6), [0.0, 1e6])
    assert exc.value.eigenvalue is not None


def test_singular_matrix_error():
    m = linres.ScatteringModel(1.0, 1e-20, g_plus=0.0, g_minus=0.0)
    with pytest.raises(InstabilityError) as exc:
        linres.chi_matrix(m, 0.0)
    assert exc.value.condition > 1e13


@given(st.floats(0, 20), st.floats(0.2, 1.2), st.floats(-1e8, 1e8))
def test_psd_real_and_above_vacuum_fraction(n, ratio, dc):
    m = model(n_bath=n, g_plus=ratio * TWO_PI * 13e6, delta_cav=dc)
    if not linres.stability_scan(m, [0.0]).stable:
        return
    grid = np.linspace(-3e7, 3e7, 41)
    tr = linres.heterodyne_psd_full(m, DetectionParams(0.3, TWO_PI * 500e6), grid)
    assert np.all(tr.psd >= 0.7 - 1e-12)


@given(st.floats(-5e8, 5e8), st.floats(-2e7, 2e7), st.floats(0, 10),
       st.floats(0.3, 1.0))
def test_detuning_symmetry(dc, dm, n, ratio):
    """(Delta, delta, omega) -> (-Delta, -delta, -omega) with the couplings kept.

    Only the image band breaks the symmetry; with the LO far from the cavity
    it is far below round-off of the sideband features.
    """
    m = model(delta_cav=dc, delta_mech=dm, n_bath=n, g_plus=ratio * TWO_PI * 13e6)
    mr = dataclasses.replace(m, delta_cav=-dc, delta_mech=-dm)
    det = DetectionParams(0.04, TWO_PI * 10e9)
    grid = np.linspace(-4e7, 4e7, 81)
    a = linres.heterodyne_psd_full(m, det, grid).psd
    b = linres.heterodyne_psd_full(mr, det, -grid[::-1]).psd[::-1]
    assert np.max(np.abs(a - b)) < 1e-12


def test_vacuum_floor(fig3):
    m = linres.ScatteringModel.from_params(fig3, n_bar=5.6)
    far = np.array([-1000.0, 1000.0]) * m.gamma_eff
    tr = linres.heterodyne_psd_full(m, fig3.detect, far)
    assert np.allclose(tr.psd, 1.0, atol=1e-6)


def test_dump_scattering(tmp_path):
    m = model()
    text = linres.dump_scattering(m, [0.0, 1e6], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").exists()
    from optobae.traces import read_columns
    meta, cols, data = read_columns(tmp_path / "s.csv")
    assert cols[0] == "offset_hz" and len(cols) == 33
    S = linres.output_scattering(m, 1e6)
    assert data[1, 1] == S[0, 0].real and data[1, 2] == S[0, 0].imag
    assert isinstance(text, str)


def test_from_params(fig3):
    m = linres.ScatteringModel.from_params(fig3)
    assert m.gamma_eff == effective_linewidth(fig3)
    assert m.g_plus == m.g_minus
    with pytest.raises(ValueError):
        linres.ScatteringModel(kappa=-1.0, gamma_eff=1.0)
