import numpy as np
import pytest

from optobae import pipeline
from optobae.errors import FitError
from optobae.params import TWO_PI, cooperativity_probe, effective_linewidth


def mhz(x):
    return TWO_PI * x * 1e6


def test_generate_engines_agree(fig3_cfg):
    grid = np.linspace(-mhz(10), mhz(10), 401)
    a = pipeline.generate(fig3_cfg, "rwa", grid)
    b = pipeline.generate(fig3_cfg, "matrix", grid)
    assert np.max(np.abs(a.psd / b.psd - 1)) < 0.01
    with pytest.raises(ValueError):
        pipeline.generate(fig3_cfg, "nope")


def test_calibration_plateau(fig3_cfg):
    rows, cal = pipeline.delta_sweep(fig3_cfg, [mhz(3)])
    assert cal.n_plus_ba == pytest.approx(6.3, abs=0.02)
    assert len(rows) == 1 and rows[0].ok


def test_single_zero_point(fig3_cfg):
    rows, _ = pipeline.delta_sweep(fig3_cfg, [0.0])
    assert len(rows) == 1 and rows[0].ok
    assert rows[0].n_inferred == pytest.approx(5.6, abs=0.02)


def test_sweep_tracks_curve(fig3_cfg):
    p = fig3_cfg.params
    C, g = cooperativity_probe(p), effective_linewidth(p)
    deltas = [mhz(x) for x in np.linspace(-3, 3, 13)]
    rows, _ = pipeline.delta_sweep(fig3_cfg, deltas[::-1], threads=4)
    assert [r.delta for r in rows] == sorted(deltas)
    assert all(r.ok for r in rows)
    n = np.array([r.n_inferred for r in rows])
    expect = pipeline.occupation_curve([r.delta for r in rows], 5.6, C, g)
    # between the coalesced and resolved limits the two-Lorentzian model is
    # only approximate; at both ends it is tight
    assert np.max(np.abs(n - expect)) < 0.2
    gap = n[0] - n[6]
    assert gap == pytest.approx(C, rel=0.02)


def test_reference_must_resolve(fig3_cfg):
    with pytest.raises(FitError):
        pipeline.delta_sweep(fig3_cfg, [0.0], reference=mhz(0.5))


def test_occupation_curve_limits():
    assert pipeline.occupation_curve(0.0, 5.6, 0.7, 1.0) == 5.6
    assert pipeline.occupation_curve(1e6, 5.6, 0.7, 1.0) == pytest.approx(6.3)


def test_direct_power_sweep_exact(fig3_cfg):
    from optobae.params import preset_config
    cfg = preset_config("fig4")
    pts, reg = pipeline.power_sweep(cfg, [0.25, 0.5, 1.0, 1.5, 2.0])
    assert reg.heating_coefficient == pytest.approx(3.85, abs=1e-10)
    assert reg.eta == pytest.approx(0.04, abs=1e-10)
    assert all(q.n_ba == q.cooperativity for q in pts)


def test_rwa_power_sweep():
    from optobae.params import preset_config
    cfg = preset_config("fig4")
    pts, reg = pipeline.power_sweep(cfg, [0.25, 0.5, 1.0, 1.5], engine="rwa")
    assert reg.heating_coefficient == pytest.approx(3.85, rel=0.01)
    assert reg.eta == pytest.approx(0.04, rel=0.01)
    assert [q.cooperativity for q in pts] == sorted(q.cooperativity for q in pts)


def test_power_sweep_rejects_nonpositive():
    from optobae.params import preset_config
    with pytest.raises(ValueError):
        pipeline.power_sweep(preset_config("fig4"), [0.0, 1.0, 2.0])
