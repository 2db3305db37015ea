"""Synthetic data generators shared by the test modules."""

import numpy as np

from optobae import fits
from optobae.params import TWO_PI

KAPPA = TWO_PI * 1.7e9
ETA_C = 0.3
POLY = (1.0, 0.15, -0.1, 0.05, 0.03)
DELTAS = tuple(d * KAPPA for d in (0.15, 0.3, 0.5, 0.75, 1.0))
GRID = np.linspace(TWO_PI * 10e6, TWO_PI * 4e9, 401)


def s21_traces(seed=0, noise=0.01, poly=POLY, deltas=DELTAS, kappa=KAPPA, eta_c=ETA_C):
    """Traces (grid, |S21|) with additive noise as a fraction of each peak."""
    rng = np.random.default_rng(seed)
    dom = (float(GRID[0]), float(GRID[-1]))
    out = []
    for d in deltas:
        m = fits.CoherentResponseModel(kappa, d, eta_c, poly, dom)
        y = fits.s21_magnitude(m, GRID)
        out.append((GRID, y + noise * y.max() * rng.standard_normal(GRID.size)))
    return out


def lorentz_trace(rng, noise, hwhm=1.0, h=(2.0, 1.5), c=(-10.0, 10.0), base=1.0):
    from optobae.traces import SpectrumTrace
    w = np.linspace(-30.0, 30.0, 1201)
    y = base + sum(hk / (1 + ((w - ck) / hwhm) ** 2) for hk, ck in zip(h, c))
    return SpectrumTrace(w, y + noise * rng.standard_normal(w.size), {})
