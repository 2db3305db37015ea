"""Spectrum generation and the fit pipelines behind the sweeps.

Engines: ``rwa`` (closed form), ``matrix`` (full linear response) and
``sde`` (stochastic oracle).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fits, linres, rwa, sde
from .errors import FitError, OptobaeError
from .params import (
    TWO_PI,
    RunConfig,
    SystemParams,
    cooperativity_probe,
    effective_linewidth,
    with_cooperativity,
)
from .traces import SpectrumTrace

ENGINES = ("rwa", "matrix", "sde")
SDE_STEPS = 1 << 24
BINS_PER_LINEWIDTH = 50
# below this |delta| / Gamma_eff the two sidebands are fitted as one peak
COALESCED = 0.05


def sde_settings(m: linres.ScatteringModel, seed: int = 0, n_steps: int = SDE_STEPS,
                 n_realizations: int = 1):
    """Step and segment length for the oracle.

    The sample rate is 2.6 times the sideband band (|delta| + 10 Gamma_eff)
    so the exact-step aliasing bound holds with margin; segments give about
    50 bins per linewidth.
    """
    band = abs(m.delta_mech) + 10.0 * m.gamma_eff
    fs = 2.6 * band / TWO_PI
    cfg = sde.SdeConfig(dt=1.0 / fs, n_steps=n_steps, seed=seed,
                        n_realizations=n_realizations)
    nperseg = 1 << math.ceil(math.log2(BINS_PER_LINEWIDTH * fs * TWO_PI / m.gamma_eff))
    return cfg, nperseg, band


def generate(cfg: RunConfig, engine: str = "rwa", grid=None, seed: int = 0,
             n_steps: int = SDE_STEPS, threads: int = 1, params: SystemParams | None = None,
             n_bar: float | None = None) -> SpectrumTrace:
    """Heterodyne PSD for ``cfg`` (or ``params`` overriding its system)."""
    p = cfg.params if params is None else params
    n = cfg.occupation() if n_bar is None else n_bar
    if engine == "rwa":
        return rwa.heterodyne_psd_rwa(p, grid, n_bar=n)
    m = linres.ScatteringModel.from_params(p, n_bar=n)
    if engine == "matrix":
        if grid is None:
            grid = rwa.default_grid(m.gamma_eff, m.delta_mech)
        return linres.heterodyne_psd_full(m, p.detect, grid, params=p)
    if engine == "sde":
        scfg, nperseg, band = sde_settings(m, seed, n_steps)
        tr = sde.oracle_psd(m, p.detect, scfg, nperseg=nperseg, band=band, threads=threads)
        tr.meta["params"] = cfg.to_mapping() if params is None else tr.meta.get("params")
        return tr
    raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")


# ---------------------------------------------------------------------------
# Occupation from sideband areas


@dataclass
class Calibration:
    unit: float
    n_plus_ba: float
    pair: fits.SidebandPair


def calibrate(trace: SpectrumTrace, delta: float) -> Calibration:
    """Unit quantum and n + n_ba from a resolved reference trace."""
    fit, pair = fits.fit_double_lorentzian(trace, n_peaks=2, delta=delta,
                                           init=_centers(delta))
    if pair is None or not fit.converged:
        raise FitError(f"reference fit failed: {fit.message} {fit.flags}")
    return Calibration(fits.quantum_unit(pair), fits.asymmetry_calibrate(pair), pair)


def _centers(delta):
    return {"center_1": -abs(delta), "center_2": abs(delta)}


def total_area(trace: SpectrumTrace, delta: float, gamma_eff: float):
    """Summed Lorentzian area, one or two peaks depending on separation."""
    if abs(delta) < COALESCED * gamma_eff:
        fit, _ = fits.fit_double_lorentzian(trace, n_peaks=1,
                                            init={"center_1": 0.0, "hwhm": gamma_eff / 2})
    else:
        init = _centers(delta)
        init["hwhm"] = gamma_eff / 2
        fit, _ = fits.fit_double_lorentzian(trace, n_peaks=2, delta=delta, init=init)
    if not fit.converged:
        raise FitError(f"fit did not converge: {fit.message}")
    return fit.params["area_total"], fit.sigmas.get("area_total", 0.0), fit


@dataclass
class SweepRow:
    delta: float
    n_inferred: float = math.nan
    sigma: float = math.nan
    ok: bool = False
    note: str = ""
    trace: SpectrumTrace | None = field(default=None, repr=False)


def inferred_occupation(trace: SpectrumTrace, delta: float, gamma_eff: float,
                        cal: Calibration) -> tuple[float, float]:
    area, sig, _ = total_area(trace, delta, gamma_eff)
    n = fits.inferred_occupation(area, cal.unit)
    return n, 0.5 * sig / cal.unit


def delta_sweep(cfg: RunConfig, deltas, engine: str = "rwa", seed: int = 0,
                threads: int = 1, n_steps: int = SDE_STEPS, reference: float | None = None):
    """Inferred occupation versus two-tone offset delta (rad/s).

    The unit quantum comes from a reference trace at ``reference`` (default:
    the configured delta).  Failing points are recorded and skipped.
    Returns ``(rows sorted by delta, Calibration)``.
    """
    p = cfg.params
    geff = effective_linewidth(p)
    ref_delta = p.drive.delta if reference is None else reference
    if abs(ref_delta) < 3.0 * geff:
        raise FitError("reference delta must resolve the sidebands (|delta| >= 3 Gamma_eff)")
    deltas = sorted(float(d) for d in deltas)

    def make(i, d):
        return generate(cfg, engine, seed=seed + i, n_steps=n_steps, params=p.replace(delta=d))

    ref = make(len(deltas), ref_delta)
    cal = calibrate(ref, ref_delta)

    def point(args):
        i, d = args
        row = SweepRow(d)
        try:
            tr = make(i, d)
            row.trace = tr
            row.n_inferred, row.sigma = inferred_occupation(tr, d, geff, cal)
            row.ok = True
        except (OptobaeError, ValueError, ArithmeticError) as exc:
            row.note = str(exc)
        return row

    jobs = list(enumerate(deltas))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(point, jobs))
    else:
        rows = [point(j) for j in jobs]
    return rows, cal


def occupation_curve(delta, n_bar, C, gamma_eff):
    """Expected inferred occupation n + C 4 delta^2 / (Gamma^2 + 4 delta^2)."""
    d2 = 4.0 * np.asarray(delta, dtype=float) ** 2
    return n_bar + C * d2 / (gamma_eff**2 + d2)


# ---------------------------------------------------------------------------
# Power sweep


@dataclass
class PowerPoint:
    cooperativity: float
    n_bar: float
    n_ba: float
    n_imp: float


def direct_power_points(C_list, beta_heating, eta, n_base) -> list[PowerPoint]:
    """Noiseless model points: n = n_base + beta C, n_ba = C, n_imp = 1/(8 eta C)."""
    return [PowerPoint(c, n_base + beta_heating * c, c, 1.0 / (8.0 * eta * c))
            for c in C_list]


def measure_power_point(trace: SpectrumTrace, delta: float, C: float) -> PowerPoint:
    """Occupation and imprecision from one resolved heterodyne trace.

    The asymmetry gives n + n_ba with n_ba = C.  Imprecision is the noise
    floor over twice the on-peak height of one quantum.
    """
    cal = calibrate(trace, delta)
    h_unit = cal.unit / (math.pi * 0.5 * cal.pair.width)
    fit, _ = fits.fit_double_lorentzian(trace, n_peaks=2, delta=delta, init=_centers(delta))
    floor = fit.params["baseline"]
    return PowerPoint(C, cal.n_plus_ba - C, C, floor / (2.0 * h_unit))


def power_sweep(cfg: RunConfig, C_list, engine: str = "direct", seed: int = 0,
                threads: int = 1, n_steps: int = SDE_STEPS):
    """Per-cooperativity points and the regression of beta and eta.

    ``engine`` is ``direct`` (model points), ``rwa``, ``matrix`` or ``sde``
    (spectra generated at occupation n_base + beta C and fitted).
    """
    C_list = [float(c) for c in C_list]
    if any(c <= 0 for c in C_list):
        raise ValueError("cooperativities must be positive")
    p = cfg.params
    if engine == "direct":
        pts = direct_power_points(C_list, cfg.beta_heating, p.detect.eta, cfg.n_base)
    else:
        def one(args):
            i, c = args
            pc = with_cooperativity(p, c)
            n = cfg.n_base + cfg.beta_heating * c
            tr = generate(cfg, engine, seed=seed + i, n_steps=n_steps, params=pc, n_bar=n)
            return measure_power_point(tr, pc.drive.delta, cooperativity_probe(pc))

        jobs = list(enumerate(C_list))
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                pts = list(pool.map(one, jobs))
        else:
            pts = [one(j) for j in jobs]
    pts.sort(key=lambda q: q.cooperativity)
    reg = fits.power_sweep_regression([(q.cooperativity, q.n_bar, q.n_imp) for q in pts])
    return pts, reg
