"""Frequency-domain linear response of the linearized two-tone system.

Field ordering throughout is ``(da, da^dag, db, db^dag)``.  A spectrum
``S_AB(w)`` here means the coefficient of ``delta(w + w')`` in
``<A(w) B(w')>``; with ``A^dag(w) = [A(-w)]^dag`` this makes ``S_aa`` the
anti-normally ordered and ``S_{a^dag a^dag}`` the normally ordered photon
spectrum of the output field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError
from .params import DetectionParams, SystemParams, coupling_rates, effective_linewidth, cooled_occupation
from .traces import SpectrumTrace, provenance, write_columns
from .params import TWO_PI

SINGULAR_COND = 1e13


@dataclass(frozen=True)
class ScatteringModel:
    kappa: float
    gamma_eff: float
    delta_cav: float = 0.0
    delta_mech: float = 0.0
    g_plus: float = 0.0
    g_minus: float = 0.0
    n_bath: float = 0.0

    def __post_init__(self):
        bad = []
        if not self.kappa > 0:
            bad.append("kappa must be > 0")
        if not self.gamma_eff > 0:
            bad.append("gamma_eff must be > 0")
        if self.g_plus < 0 or self.g_minus < 0:
            bad.append("couplings must be >= 0")
        if self.n_bath < 0:
            bad.append("n_bath must be >= 0")
        if bad:
            raise ValueError("; ".join(bad))

    @classmethod
    def from_params(cls, p: SystemParams, n_bar: float | None = None) -> "ScatteringModel":
        g_plus, g_minus = coupling_rates(p)
        return cls(
            kappa=p.cavity.kappa,
            gamma_eff=effective_linewidth(p),
            delta_cav=p.cavity.detuning_carrier,
            delta_mech=p.drive.delta,
            g_plus=g_plus,
            g_minus=g_minus,
            n_bath=cooled_occupation(p) if n_bar is None else n_bar,
        )

    @property
    def coupling_matrix(self) -> np.ndarray:
        """diag(sqrt(kappa), sqrt(kappa), sqrt(Gamma), sqrt(Gamma))."""
        sk, sg = math.sqrt(self.kappa), math.sqrt(self.gamma_eff)
        return np.diag([sk, sk, sg, sg]).astype(complex)


def chi_inverse(m: ScatteringModel, omega) -> np.ndarray:
    """Inverse susceptibility matrix; shape (4, 4) or (N, 4, 4)."""
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    k2, g2 = 0.5 * m.kappa, 0.5 * m.gamma_eff
    gp, gm = m.g_plus, m.g_minus
    out = np.zeros(w.shape + (4, 4), dtype=complex)
    out[..., 0, 0] = -1j * (w + m.delta_cav) + k2
    out[..., 1, 1] = -1j * (w - m.delta_cav) + k2
    out[..., 2, 2] = -1j * (w + m.delta_mech) + g2
    out[..., 3, 3] = -1j * (w - m.delta_mech) + g2
    out[..., 0, 2] = -1j * gm
    out[..., 0, 3] = -1j * gp
    out[..., 1, 2] = 1j * gp
    out[..., 1, 3] = 1j * gm
    out[..., 2, 0] = -1j * gm
    out[..., 2, 1] = -1j * gp
    out[..., 3, 0] = 1j * gp
    out[..., 3, 1] = 1j * gm
    return out[0] if scalar else out


def chi_matrix(m: ScatteringModel, omega) -> np.ndarray:
    """Susceptibility matrix chi(w), LU-inverted per frequency.

    Raises InstabilityError at the first frequency where the inverse
    susceptibility is numerically singular.
    """
    kinv = chi_inverse(m, omega)
    cond = np.linalg.cond(kinv)
    bad = ~np.isfinite(cond) | (cond > SINGULAR_COND)
    if np.any(bad):
        w = np.atleast_1d(np.asarray(omega, dtype=float))
        i = int(np.flatnonzero(np.atleast_1d(bad))[0])
        c = float(np.atleast_1d(cond)[i])
        raise InstabilityError(
            f"response matrix singular at omega/2pi = {w[i] / TWO_PI:.6g} Hz "
            f"(condition number {c:.3g})", omega=float(w[i]), condition=c)
    return np.linalg.inv(kinv)


def output_scattering(m: ScatteringModel, omega) -> np.ndarray:
    """Input-output map 1 - L chi(w) L."""
    chi = chi_matrix(m, omega)
    L = m.coupling_matrix
    return np.eye(4) - L @ chi @ L


def input_correlations(n_bath: float) -> np.ndarray:
    """N_ij with <d_in,i(w) d_in,j(w')> = N_ij delta(w + w')."""
    N = np.zeros((4, 4))
    N[0, 1] = 1.0           # <a a^dag>, optical vacuum
    N[2, 3] = n_bath + 1.0  # <b b^dag>
    N[3, 2] = n_bath        # <b^dag b>
    return N


@dataclass
class OutputCorrelations:
    s_aa: np.ndarray
    s_adad: np.ndarray
    grid: np.ndarray


def output_correlations(m: ScatteringModel, omega) -> OutputCorrelations:
    """S_{a_out a_out}(w) and S_{a_out^dag a_out^dag}(w) on a grid.

    Sums over the four input channels weighted by their correlations.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    S_pos = output_scattering(m, w)
    S_neg = output_scattering(m, -w)
    N = input_correlations(m.n_bath)
    s_aa = np.einsum("ki,kj,ij->k", S_pos[:, 0, :], S_neg[:, 1, :], N)
    s_adad = np.einsum("ki,kj,ij->k", S_pos[:, 1, :], S_neg[:, 0, :], N)
    return OutputCorrelations(s_aa, s_adad, w)


@dataclass
class StabilityReport:
    grid: np.ndarray
    condition: np.ndarray
    sigma_min: np.ndarray
    eigenvalues: np.ndarray
    stable: bool

    @property
    def max_growth_rate(self) -> float:
        return float(np.max(self.eigenvalues.real))


def dynamical_matrix(m: ScatteringModel) -> np.ndarray:
    """Drift matrix A of d/dt d = A d + L d_in."""
    return -chi_inverse(m, 0.0)


def stability_scan(m: ScatteringModel, grid) -> StabilityReport:
    w = np.atleast_1d(np.asarray(grid, dtype=float))
    sv = np.linalg.svd(chi_inverse(m, w), compute_uv=False)
    with np.errstate(divide="ignore"):
        cond = sv[:, 0] / sv[:, -1]
    eig = np.linalg.eigvals(dynamical_matrix(m))
    # tolerance scaled to the largest rate in the problem
    scale = max(m.kappa, m.gamma_eff, abs(m.delta_cav), abs(m.delta_mech))
    stable = bool(np.all(eig.real < 1e-12 * scale))
    return StabilityReport(w, cond, sv[:, -1], eig, stable)


def require_stable(m: ScatteringModel, grid) -> StabilityReport:
    rep = stability_scan(m, grid)
    if not rep.stable:
        w = rep.grid
        raise InstabilityError(
            f"linearized dynamics unstable (growth rate {rep.max_growth_rate:.4g} rad/s) "
            f"over the whole grid {w[0] / TWO_PI:.6g} .. {w[-1] / TWO_PI:.6g} Hz",
            eigenvalue=complex(rep.eigenvalues[np.argmax(rep.eigenvalues.real)]))
    return rep


def heterodyne_psd_full(m: ScatteringModel, detect: DetectionParams, grid,
                        params: SystemParams | None = None) -> SpectrumTrace:
    """Symmetrized balanced-heterodyne PSD referred to the LO offset.

    At reported offset ``v`` the photocurrent frequency is ``delta_lo - v``,
    so the PSD is ``S_aa(2 delta_lo - v) + S_{a^dag a^dag}(v)``; the first
    term is the image band.  Finite efficiency mixes in vacuum:
    ``eta S + (1 - eta)``.  Vacuum gives exactly 1.
    """
    v = np.asarray(grid, dtype=float)
    require_stable(m, v)
    image = output_correlations(m, 2.0 * detect.delta_lo - v).s_aa
    signal = output_correlations(m, v).s_adad
    total = image + signal
    if np.max(np.abs(total.imag)) > 1e-10 * max(1.0, np.max(np.abs(total.real))):
        raise ArithmeticError("assembled heterodyne spectrum is not real")
    psd = detect.eta * total.real + (1.0 - detect.eta)
    meta = provenance("linres", params, n_bar=m.n_bath,
                      gamma_eff=m.gamma_eff, g_plus=m.g_plus, g_minus=m.g_minus)
    return SpectrumTrace(v, np.clip(psd, 0.0, None), meta)


def dump_scattering(m: ScatteringModel, grid, path=None) -> str:
    """Complex scattering matrix per frequency; columns re_ij, im_ij."""
    w = np.atleast_1d(np.asarray(grid, dtype=float))
    S = output_scattering(m, w).reshape(w.size, 16)
    cols = ["offset_hz"]
    for i in range(4):
        for j in range(4):
            cols += [f"re_{i}{j}", f"im_{i}{j}"]
    data = np.empty((w.size, 33))
    data[:, 0] = w / TWO_PI
    data[:, 1::2] = S.real
    data[:, 2::2] = S.imag
    return write_columns(path, cols, data, {"generator": "linres-scattering"})
