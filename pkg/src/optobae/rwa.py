"""Closed-form spectra in the rotating-wave, resolved-sideband limit."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .params import (
    SystemParams,
    cooled_occupation,
    cooperativity_probe,
    effective_linewidth,
)
from .traces import SpectrumTrace, provenance


@dataclass(frozen=True)
class MechSusceptibility:
    gamma_eff: float

    def __post_init__(self):
        if not self.gamma_eff > 0:
            raise DomainError("gamma_eff must be > 0")

    def __call__(self, omega):
        return chi_m(self, omega)


def chi_m(s: MechSusceptibility, omega):
    """Mechanical susceptibility 1 / (-i omega + Gamma_eff / 2)."""
    return 1.0 / (-1j * np.asarray(omega, dtype=float) + 0.5 * s.gamma_eff)


def default_grid(gamma_eff: float, delta: float, n: int = 2001) -> np.ndarray:
    """Linear grid over +-(|delta| + 10 Gamma_eff)."""
    half = abs(delta) + 10.0 * gamma_eff
    return np.linspace(-half, half, n)


def sideband_terms(omega, gamma_eff: float, delta: float):
    """The three bracket terms: anti-Stokes, Stokes and backaction shapes.

    Returned unweighted, i.e. ``|chi(w - d)|^2``, ``|chi(w + d)|^2`` and
    ``|chi(w - d) - chi(w + d)|^2``.
    """
    s = MechSusceptibility(gamma_eff)
    omega = np.asarray(omega, dtype=float)
    lo = chi_m(s, omega - delta)
    hi = chi_m(s, omega + delta)
    return np.abs(lo) ** 2, np.abs(hi) ** 2, np.abs(lo - hi) ** 2


def heterodyne_psd(omega, gamma_eff, cooperativity, n_bar, eta, delta):
    """Vacuum-normalized heterodyne PSD of the balanced two-tone probe.

    1 + eta G^2 C [ n |chi(w-d)|^2 + (n+1) |chi(w+d)|^2 + C |chi(w-d) - chi(w+d)|^2 ]
    """
    anti, stokes, qba = sideband_terms(omega, gamma_eff, delta)
    bracket = n_bar * anti + (n_bar + 1.0) * stokes + cooperativity * qba
    return 1.0 + eta * gamma_eff**2 * cooperativity * bracket


def _require_rwa_case(p: SystemParams):
    if p.drive.probe_imbalance != 1.0:
        raise DomainError("closed form needs balanced probes; use the linres engine")
    if p.cavity.detuning_carrier != 0.0:
        raise DomainError("closed form needs a resonant carrier; use the linres engine")


def heterodyne_psd_rwa(p: SystemParams, grid=None, n_bar: float | None = None) -> SpectrumTrace:
    _require_rwa_case(p)
    geff = effective_linewidth(p)
    c = cooperativity_probe(p)
    n = cooled_occupation(p) if n_bar is None else n_bar
    if grid is None:
        grid = default_grid(geff, p.drive.delta)
    psd = heterodyne_psd(grid, geff, c, n, p.detect.eta, p.drive.delta)
    meta = provenance("rwa", p, n_bar=n, cooperativity=c, gamma_eff=geff)
    return SpectrumTrace(np.asarray(grid, dtype=float), psd, meta)


def quadrature_psd(omega, gamma_eff, n_bar):
    """(Gamma_eff / 2)(2n + 1)|chi(w)|^2, integrating to n + 1/2 over d(w)/2pi."""
    s = MechSusceptibility(gamma_eff)
    return 0.5 * gamma_eff * (2.0 * n_bar + 1.0) * np.abs(chi_m(s, omega)) ** 2


def quadrature_psd_xx(p: SystemParams, grid=None, n_bar: float | None = None) -> SpectrumTrace:
    geff = effective_linewidth(p)
    n = cooled_occupation(p) if n_bar is None else n_bar
    if grid is None:
        grid = default_grid(geff, 0.0)
    psd = quadrature_psd(grid, geff, n)
    return SpectrumTrace(np.asarray(grid, dtype=float), psd,
                         provenance("rwa-xx", p, n_bar=n, gamma_eff=geff))


BAD_CAVITY_WARN = 0.1


def bad_cavity_occupation(p: SystemParams, cooperativity: float | None = None) -> float:
    """Backaction leaking through counter-rotating terms, (kappa / 4 Omega_m)^2 C."""
    c = cooperativity_probe(p) if cooperativity is None else cooperativity
    n_bad = (p.cavity.kappa / (4.0 * p.mech.omega_m)) ** 2 * c
    if n_bad > BAD_CAVITY_WARN:
        warnings.warn(f"bad-cavity occupation {n_bad:.3g} is not negligible; "
                      "RWA spectra will underestimate backaction", RuntimeWarning)
    return n_bad
