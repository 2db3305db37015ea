"""Estimation kernels for spectra and coherent-response traces.

Two different quantities share the letter beta in this field: the phase
modulator's modulation index (``mod_index`` here) and the absorption
heating coefficient (``heating_coefficient``).  They are never mixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev
from scipy import signal

from .errors import FitError
from .lm import damped_least_squares, inverse_normal_matrix, numeric_jacobian
from .params import TWO_PI
from .traces import SpectrumTrace


@dataclass
class FitResult:
    params: dict
    sigmas: dict
    residual_rms: float
    converged: bool
    n_iter: int
    message: str = ""
    flags: tuple = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.residual_rms < 0:
            raise ValueError("residual_rms must be >= 0")


@dataclass(frozen=True)
class SidebandPair:
    area_stokes: float
    area_antistokes: float
    center_stokes: float
    center_antistokes: float
    width: float  # full width at half maximum, rad/s
    sigma_stokes: float = 0.0
    sigma_antistokes: float = 0.0
    cov_areas: float = 0.0

    def __post_init__(self):
        if self.area_stokes < 0 or self.area_antistokes < 0:
            raise ValueError("sideband areas must be >= 0")
        if not self.width > 0:
            raise ValueError("width must be > 0")


# ---------------------------------------------------------------------------
# Lorentzians


def _lorentz_model(p, u, n_peaks):
    b, gam = p[0], p[-1]
    out = np.full_like(u, b)
    for k in range(n_peaks):
        h, c = p[1 + 2 * k], p[2 + 2 * k]
        s = (u - c) / gam
        out += h / (1.0 + s * s)
    return out


def _lorentz_jac(p, u, n_peaks):
    gam = p[-1]
    J = np.zeros((u.size, p.size))
    J[:, 0] = 1.0
    for k in range(n_peaks):
        h, c = p[1 + 2 * k], p[2 + 2 * k]
        s = (u - c) / gam
        L = 1.0 / (1.0 + s * s)
        J[:, 1 + 2 * k] = L
        J[:, 2 + 2 * k] = h * 2.0 * s / gam * L * L
        J[:, -1] += h * 2.0 * s * s / gam * L * L
    return J


def _noise_level(y):
    d = np.diff(y)
    if d.size == 0:
        return 0.0
    return 1.4826 * float(np.median(np.abs(d - np.median(d)))) / math.sqrt(2.0)


def _auto_init(u, y, n_peaks):
    n = u.size
    edge = max(2, n // 10)
    base = float(np.median(np.concatenate([y[:edge], y[-edge:]])))
    width = max(1, n // 200)
    smooth = np.convolve(y - base, np.ones(width) / width, mode="same")
    noise = _noise_level(y) / math.sqrt(width)
    thresh = max(5.0 * noise, 1e-9 * max(1.0, abs(base)))
    idx, props = signal.find_peaks(smooth, prominence=thresh)
    if idx.size == 0:
        return None, []
    order = np.argsort(props["prominences"])[::-1]
    idx = idx[order]
    flags = []
    wanted = 2 if n_peaks is None else n_peaks
    if wanted == 2 and idx.size < 2:
        if n_peaks == 2:
            flags.append("single-peak fallback: second peak not resolved")
        wanted = 1
    picked = np.sort(idx[:wanted])
    if wanted == 2 and picked[1] - picked[0] < 2:
        flags.append("single-peak fallback: peaks closer than grid resolution")
        picked = picked[:1]
        wanted = 1
    w_samples = signal.peak_widths(smooth, [idx[0]], rel_height=0.5)[0][0]
    du = float(np.mean(np.diff(u)))
    gam = max(0.5 * w_samples * du, du)
    p = [base]
    for i in picked:
        p += [max(float(smooth[i]), thresh), float(u[i])]
    p.append(gam)
    return np.array(p), flags


def _delta_hint(trace: SpectrumTrace, delta):
    if delta is not None:
        return delta
    params = trace.meta.get("params") if isinstance(trace.meta, dict) else None
    if isinstance(params, dict) and "delta_hz" in params:
        return TWO_PI * float(params["delta_hz"])
    return None


CORE_WINDOW = 10.0


def fit_double_lorentzian(trace: SpectrumTrace, init=None, n_peaks=None, delta=None,
                          sigma=None, core_window=CORE_WINDOW):
    """Baseline plus one or two Lorentzians of common width.

    ``init`` is an optional dict with any of baseline, height_1, center_1,
    height_2, center_2, hwhm (rad/s).  ``n_peaks`` forces 1 or 2; ``delta``
    (rad/s) identifies the Stokes peak as the one nearer ``-delta`` and
    defaults to the value recorded in the trace metadata, else the lower
    peak is taken as Stokes.  ``sigma`` gives per-point uncertainties for a
    weighted fit.  After a first fit over the whole trace the fit is
    repeated on points within ``core_window`` HWHM of a peak (None skips
    this).

    Returns ``(FitResult, SidebandPair or None)``; the pair is None for a
    single coalesced peak or a flagged failure.
    """
    w = trace.freq_offsets
    y = trace.psd
    mid = 0.5 * (w[0] + w[-1])
    scale = 0.5 * (w[-1] - w[0]) or 1.0
    u = (w - mid) / scale
    p0, flags = _auto_init(u, y, n_peaks)
    if init:
        if p0 is None:
            npk = n_peaks or (2 if "center_2" in init else 1)
            p0 = np.zeros(2 + 2 * npk)
            p0[0] = float(np.median(y))
            p0[-1] = 0.05
        npk = (p0.size - 2) // 2
        keys = ["baseline"] + [f"{k}_{i + 1}" for i in range(npk) for k in ("height", "center")]
        for j, key in enumerate(keys):
            if key in init:
                v = init[key]
                p0[j] = (v - mid) / scale if key.startswith("center") else v
        if "hwhm" in init:
            p0[-1] = init["hwhm"] / scale
    if p0 is None:
        res = FitResult({"baseline": float(np.median(y)), "area_total": 0.0}, {}, 0.0,
                        False, 0, "no peak above the noise floor",
                        ("zero-area: no peak found",))
        return res, None
    npk = (p0.size - 2) // 2
    wts = None if sigma is None else 1.0 / np.asarray(sigma, dtype=float)

    def fun(p):
        r = _lorentz_model(p, u, npk) - y
        return r if wts is None else r * wts

    def jac(p):
        J = _lorentz_jac(p, u, npk)
        return J if wts is None else J * wts[:, None]

    lm = damped_least_squares(fun, p0, jac)
    mask = None
    if core_window and lm.converged:
        # refit on the peak cores; distant tails carry the broad interference
        # term of the backaction spectrum, which is not Lorentzian
        gam_fit = abs(lm.x[-1])
        near = np.zeros(u.size, dtype=bool)
        for k in range(npk):
            near |= np.abs(u - lm.x[2 + 2 * k]) <= core_window * gam_fit
        if 20 <= near.sum() < u.size:
            mask = near
            u_all, y_all, w_all = u, y, wts
            u, y = u_all[mask], y_all[mask]
            wts = None if w_all is None else w_all[mask]
            lm = damped_least_squares(fun, lm.x, jac)
    cov = lm.covariance(absolute_sigma=sigma is not None)
    p = lm.x.copy()
    if p[-1] < 0:
        p[-1] = -p[-1]
    # back to rad/s
    S = np.ones(p.size)
    S[2:-1:2] = scale
    S[-1] = scale
    phys = p * S
    phys[2:-1:2] += mid
    covp = cov * np.outer(S, S)
    sig = np.sqrt(np.clip(np.diag(covp), 0.0, None))
    names = ["baseline"] + [f"{k}_{i + 1}" for i in range(npk) for k in ("height", "center")] + ["hwhm"]
    params = dict(zip(names, map(float, phys)))
    sigmas = dict(zip(names, map(float, sig)))
    gam = params["hwhm"]
    areas, grads = [], []
    for k in range(npk):
        h = params[f"height_{k + 1}"]
        areas.append(math.pi * h * gam)
        g = np.zeros(p.size)
        g[1 + 2 * k] = math.pi * gam
        g[-1] = math.pi * h
        grads.append(g)
    area_cov = np.array([[gi @ covp @ gj for gj in grads] for gi in grads])
    params["area_total"] = float(sum(areas))
    sigmas["area_total"] = float(math.sqrt(max(np.sum(area_cov), 0.0)))
    rms = float(math.sqrt(np.mean((_lorentz_model(p, u, npk) - y) ** 2)))
    converged = lm.converged and bool(np.all(np.isfinite(p)))
    fit = FitResult(params, sigmas, rms, converged, lm.n_iter, lm.message, tuple(flags),
                    {"covariance": covp, "names": names,
                     "n_fit_points": int(u.size), "core_window": mask is not None})
    if npk < 2:
        return fit, None
    if min(areas) < 0:
        fit.flags = fit.flags + ("negative sideband area",)
        return fit, None
    centers = [params["center_1"], params["center_2"]]
    d = _delta_hint(trace, delta)
    if d is None:
        si = 0
    else:
        si = int(np.argmin([abs(c + d) for c in centers]))
    ai = 1 - si
    pair = SidebandPair(
        area_stokes=areas[si], area_antistokes=areas[ai],
        center_stokes=centers[si], center_antistokes=centers[ai],
        width=2.0 * gam,
        sigma_stokes=float(math.sqrt(max(area_cov[si, si], 0.0))),
        sigma_antistokes=float(math.sqrt(max(area_cov[ai, ai], 0.0))),
        cov_areas=float(area_cov[si, ai]),
    )
    return fit, pair


def quantum_unit(sb: SidebandPair) -> float:
    """Area corresponding to one mechanical quantum (Stokes minus anti-Stokes)."""
    return sb.area_stokes - sb.area_antistokes


def asymmetry_calibrate(sb: SidebandPair) -> float:
    """Occupation including backaction heating, from sideband asymmetry.

    n + n_ba = A_antistokes / (A_stokes - A_antistokes).
    """
    diff = quantum_unit(sb)
    if diff <= 0:
        raise FitError("asymmetry inverted: Stokes area does not exceed anti-Stokes area")
    var = sb.sigma_stokes**2 + sb.sigma_antistokes**2 - 2.0 * sb.cov_areas
    if var > 0 and diff < math.sqrt(var):
        raise FitError(f"ill-conditioned calibration: area difference {diff:.3g} "
                       f"below its uncertainty {math.sqrt(var):.3g}")
    return sb.area_antistokes / diff


def inferred_occupation(total_area: float, unit: float) -> float:
    """Occupation from the summed sideband area in calibrated units.

    Both the resolved pair (n + C, n + 1 + C) and the coalesced peak
    (2n + 1) satisfy n_inf = (A / unit - 1) / 2.
    """
    if not unit > 0:
        raise FitError("quantum unit must be positive")
    return 0.5 * (total_area / unit - 1.0)


# ---------------------------------------------------------------------------
# Power sweep


@dataclass(frozen=True)
class PowerSweepFit:
    heating_coefficient: float
    eta: float
    sigma_heating: float
    sigma_eta: float
    n_base: float
    sigma_n_base: float


def _wls(X, y, w):
    sw = np.sqrt(w)
    A = X * sw[:, None]
    b = y * sw
    coef, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < X.shape[1]:
        raise FitError("rank-deficient design: need distinct cooperativities")
    resid = b - A @ coef
    dof = X.shape[0] - X.shape[1]
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = np.linalg.inv(A.T @ A) * s2
    return coef, np.sqrt(np.clip(np.diag(cov), 0.0, None))


def power_sweep_regression(points) -> PowerSweepFit:
    """Heating coefficient and detection efficiency from a probe-power sweep.

    ``points`` rows are (C, n_measured, n_imp_measured) with optional fourth
    and fifth columns holding their one-sigma errors (then the fits are
    weighted).  n = n_base + beta C; n_imp = 1 / (8 eta C).
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[1] not in (3, 5):
        raise FitError("points need 3 or 5 columns")
    C, n, nimp = P[:, 0], P[:, 1], P[:, 2]
    if np.any(C <= 0):
        raise FitError("cooperativities must be positive")
    if np.unique(C).size < 2:
        raise FitError("rank-deficient design: need distinct cooperativities")
    if C.size < 3:
        raise FitError("need at least 3 sweep points")
    wn = 1.0 / P[:, 3] ** 2 if P.shape[1] == 5 else np.ones_like(C)
    wi = 1.0 / P[:, 4] ** 2 if P.shape[1] == 5 else np.ones_like(C)
    (n0, beta), (s_n0, s_beta) = _wls(np.column_stack([np.ones_like(C), C]), n, wn)
    (slope,), (s_slope,) = _wls((1.0 / C)[:, None], nimp, wi)
    if not slope > 0:
        raise FitError("imprecision does not fall with cooperativity")
    eta = 1.0 / (8.0 * slope)
    return PowerSweepFit(float(beta), float(eta), float(s_beta),
                         float(s_slope / (8.0 * slope**2)), float(n0), float(s_n0))


# ---------------------------------------------------------------------------
# Coherent response (network analyzer S21)


@dataclass(frozen=True)
class CoherentResponseModel:
    kappa: float
    delta_cav: float
    eta_c: float
    mod_index_poly: tuple = (1.0,)
    poly_domain: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")
        if not 0 <= self.eta_c <= 1:
            raise ValueError("eta_c must lie in [0, 1]")

    def mod_index(self, Omega):
        lo, hi = self.poly_domain
        x = (2.0 * np.asarray(Omega, dtype=float) - (lo + hi)) / (hi - lo)
        return chebyshev.chebval(x, self.mod_index_poly)


def reflection(detuning, kappa, eta_c):
    """Amplitude reflection r = 1 - eta_c kappa / (kappa/2 - i detuning)."""
    return 1.0 - eta_c * kappa / (0.5 * kappa - 1j * np.asarray(detuning, dtype=float))


def _s21_core(Omega, kappa, eta_c, delta):
    r0 = reflection(delta, kappa, eta_c)
    rm = reflection(delta - Omega, kappa, eta_c)
    rp = reflection(delta + Omega, kappa, eta_c)
    return r0 * np.conj(rm) - np.conj(r0) * rp


def s21_magnitude(m: CoherentResponseModel, Omega):
    """|S21| = (beta(Omega)/2) |r(D) r*(D - Omega) - r*(D) r(D + Omega)|."""
    u = _s21_core(np.asarray(Omega, dtype=float), m.kappa, m.eta_c, m.delta_cav)
    return 0.5 * m.mod_index(Omega) * np.abs(u)


def _dr(x, kappa, eta_c):
    """Derivatives of r(x) w.r.t. kappa, eta_c and x."""
    den = 0.5 * kappa - 1j * x
    q = kappa / den
    dq_dx = 1j * kappa / den**2
    dq_dk = -1j * x / den**2
    return -eta_c * dq_dk, -q, -eta_c * dq_dx


def _s21_core_grad(Omega, kappa, eta_c, delta):
    """u and du/d(kappa, eta_c, delta)."""
    xs = (delta, delta - Omega, delta + Omega)
    r0, rm, rp = (reflection(x, kappa, eta_c) for x in xs)
    d0, dm, dp = (_dr(x, kappa, eta_c) for x in xs)
    u = r0 * np.conj(rm) - np.conj(r0) * rp
    grads = []
    for k in range(3):
        a0, am, ap = d0[k], dm[k], dp[k]
        grads.append(a0 * np.conj(rm) + r0 * np.conj(am) - np.conj(a0) * rp - np.conj(r0) * ap)
    return u, grads


def _abs_grad(u, du):
    mag = np.abs(u)
    safe = np.where(mag > 0, mag, 1.0)
    return np.where(mag > 0, np.real(np.conj(u) * du) / safe, 0.0)


class _S21Problem:
    """Joint |S21| least squares.

    Nonlinear parameters theta = (kappa, phi, delta_1..n) with
    eta_c = sin(phi)^2, which keeps eta_c in [0, 1]: with a free prefactor
    the profile in eta_c is nearly flat and otherwise drifts to infinity.  The Chebyshev
    prefactor coefficients enter linearly and, unless frozen, are solved
    for at every theta (variable projection).  Frequencies are divided by
    ``scale`` for conditioning.
    """

    def __init__(self, traces, order, frozen, domain, scale):
        self.traces = [(np.asarray(g, float) / scale, np.asarray(v, float)) for g, v in traces]
        self.y = np.concatenate([v for _, v in self.traces])
        self.order = order
        self.frozen = frozen
        self.scale = scale
        lo, hi = domain
        x = [(2.0 * g * scale - (lo + hi)) / (hi - lo) for g, _ in self.traces]
        if frozen is None:
            self.T = [chebyshev.chebvander(xi, order) for xi in x]
        else:
            self.beta = [chebyshev.chebval(xi, frozen) for xi in x]
        self.nt = len(self.traces)
        self.n_theta = 2 + self.nt
        self.n_lin = 0 if frozen is not None else order + 1

    def _shapes(self, theta, grad=False):
        k, e = theta[0], math.sin(theta[1]) ** 2
        de_dphi = math.sin(2.0 * theta[1])
        out = []
        for i, (g, _) in enumerate(self.traces):
            if grad:
                u, (du_k, du_e, du_d) = _s21_core_grad(g, k, e, theta[2 + i])
                out.append((0.5 * np.abs(u), 0.5 * _abs_grad(u, du_k),
                            0.5 * de_dphi * _abs_grad(u, du_e), 0.5 * _abs_grad(u, du_d)))
            else:
                out.append(0.5 * np.abs(_s21_core(g, k, e, theta[2 + i])))
        return out

    def _design(self, shapes):
        return np.vstack([s[:, None] * T for s, T in zip(shapes, self.T)])

    def linear_coefficients(self, theta):
        A = self._design(self._shapes(theta))
        coef, *_ = np.linalg.lstsq(A, self.y, rcond=None)
        return coef

    def residual(self, theta):
        """Residual with the prefactor eliminated (or frozen)."""
        if not theta[0] > 0 or not np.all(np.isfinite(theta)):
            return np.full(self.y.size, np.inf)  # rejected by the optimizer
        shapes = self._shapes(theta)
        if self.frozen is not None:
            return np.concatenate([s * b for s, b in zip(shapes, self.beta)]) - self.y
        A = self._design(shapes)
        coef, *_ = np.linalg.lstsq(A, self.y, rcond=None)
        return A @ coef - self.y

    def _dmodel(self, sh, beta_list):
        """d(model)/d(theta) for fixed prefactor values per trace."""
        n = self.y.size
        D = np.zeros((n, self.n_theta))
        row = 0
        for i, ((_, dk, de, dd), beta) in enumerate(zip(sh, beta_list)):
            m = dk.size
            D[row:row + m, 0] = beta * dk
            D[row:row + m, 1] = beta * de
            D[row:row + m, 2 + i] = beta * dd
            row += m
        return D

    def jac(self, theta):
        """Exact Jacobian of the variable-projection residual (Golub-Pereyra).

        With r = A c - y and c = A^+ y:
        dr/dtheta_k = P_perp A_k c - (A^+)^T A_k^T r.
        """
        sh = self._shapes(theta, grad=True)
        if self.frozen is not None:
            return self._dmodel(sh, self.beta)
        A = self._design([s[0] for s in sh])
        Q, R = np.linalg.qr(A)
        coef = np.linalg.solve(R, Q.T @ self.y)
        r = A @ coef - self.y
        D = self._dmodel(sh, [T @ coef for T in self.T])
        J = D - Q @ (Q.T @ D)
        # second term: A_k^T r, where A_k scales the rows of trace i's block
        G = np.zeros((self.n_lin, self.n_theta))
        row = 0
        for i, ((_, dk, de, dd), T) in enumerate(zip(sh, self.T)):
            m = dk.size
            ri = r[row:row + m]
            G[:, 0] += T.T @ (dk * ri)
            G[:, 1] += T.T @ (de * ri)
            G[:, 2 + i] += T.T @ (dd * ri)
            row += m
        return J - Q @ np.linalg.solve(R.T, G)

    def full_jac(self, theta, coef):
        """Jacobian in (theta, coefficients), for the covariance."""
        sh = self._shapes(theta, grad=True)
        if self.frozen is not None:
            return self._dmodel(sh, self.beta)
        D = self._dmodel(sh, [T @ coef for T in self.T])
        return np.hstack([D, self._design([s[0] for s in sh])])


def _phi(eta_c):
    return math.asin(math.sqrt(min(max(eta_c, 0.0), 1.0)))


def _grid_init(problem, sign, kappa0, eta0):
    """Coarse search over kappa, eta_c and each detuning with a constant
    prefactor solved linearly."""
    gmax = max(float(np.max(np.abs(g))) for g, _ in problem.traces)
    kappas = [kappa0 / problem.scale] if kappa0 else list(np.geomspace(gmax / 20, gmax * 2, 25))
    etas = [eta0] if eta0 is not None else [0.1, 0.2, 0.3, 0.4, 0.6, 0.8]
    cand = np.linspace(0.0, gmax, 121)[1:]
    best = None
    for k in kappas:
        for e in etas:
            total, ds = 0.0, []
            for i, (g, v) in enumerate(problem.traces):
                errs = []
                for d in cand:
                    shape = 0.5 * np.abs(_s21_core(g, k, e, d))
                    if problem.frozen is not None:
                        shape = shape * problem.beta[i]
                    den = float(shape @ shape)
                    a = float(shape @ v) / den if den > 0 else 0.0
                    errs.append(float(np.sum((a * shape - v) ** 2)))
                j = int(np.argmin(errs))
                ds.append(sign * cand[j])
                total += errs[j]
            if best is None or total < best[0]:
                best = (total, k, e, ds)
    return best[1:]


def fit_s21(traces, joint=True, order=6, prefactor=None, sign=1.0, init=None) -> FitResult:
    """Fit |S21| traces for detuning, linewidth and coupling.

    ``traces`` is a sequence of ``(Omega grid [rad/s], |S21| data)``.  With
    ``joint`` all traces share kappa, eta_c and the modulation-index
    polynomial (Chebyshev of degree ``order`` over the scanned band) while
    each has its own detuning.  Passing ``prefactor`` (coefficients, domain)
    freezes a previously calibrated polynomial.  Without ``joint`` exactly
    one trace is fitted.

    |S21| is invariant under detuning -> -detuning, so ``sign`` only picks
    the reported branch.  ``init`` may hold kappa, eta_c, deltas.
    """
    traces = list(traces)
    if not traces:
        raise FitError("need at least one trace")
    if not joint and len(traces) != 1:
        raise FitError("independent mode fits exactly one trace")
    all_g = np.concatenate([np.asarray(g, float) for g, _ in traces])
    if prefactor is not None:
        coefs, domain = prefactor
        frozen = np.asarray(coefs, float)
    else:
        if order < 0:
            raise FitError("polynomial order must be >= 0")
        frozen = None
        domain = (float(all_g.min()), float(all_g.max()))
        if domain[1] <= domain[0]:
            raise FitError("degenerate frequency grid")
        min_pts = min(len(g) for g, _ in traces)
        if order + 1 > min_pts // 4:
            raise FitError(f"polynomial order {order} exceeds what {min_pts} points per "
                           "trace can support")
    scale = float(np.max(np.abs(all_g)))
    prob = _S21Problem(traces, order, frozen, domain, scale)
    if prob.n_theta + prob.n_lin >= all_g.size:
        raise FitError("more parameters than data points")
    sgn = 1.0 if sign >= 0 else -1.0

    init = dict(init or {})
    if "deltas" in init and "kappa" in init and "eta_c" in init:
        theta0 = np.concatenate([[init["kappa"] / scale, _phi(init["eta_c"])],
                                 np.asarray(init["deltas"], float) / scale])
    else:
        k0, e0, d0 = _grid_init(prob, sgn, init.get("kappa"), init.get("eta_c"))
        theta0 = np.concatenate([[k0, _phi(e0)], d0])

    lm = damped_least_squares(prob.residual, theta0, prob.jac)
    theta = lm.x.copy()
    # |S21| is even in each detuning: fold onto the requested branch
    theta[2:] = sgn * np.abs(theta[2:])
    coef = frozen if frozen is not None else prob.linear_coefficients(theta)
    Jf = prob.full_jac(theta, coef)
    r = prob.residual(theta)
    dof = max(r.size - Jf.shape[1], 1)
    cov = inverse_normal_matrix(Jf) * float(r @ r) / dof

    S = np.ones(prob.n_theta)
    S[0] = scale
    S[1] = abs(math.sin(2.0 * theta[1]))
    S[2:] = scale
    sig_all = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    names = ["kappa", "eta_c"] + [f"delta_{i}" for i in range(prob.nt)]
    phys = theta * S
    phys[1] = math.sin(theta[1]) ** 2
    params = dict(zip(names, map(float, phys)))
    sigmas = dict(zip(names, map(float, sig_all[:prob.n_theta] * S)))
    if frozen is None:
        for j in range(order + 1):
            params[f"poly_{j}"] = float(coef[j])
            sigmas[f"poly_{j}"] = float(sig_all[prob.n_theta + j])
    rms = float(math.sqrt(np.mean(r**2)))
    flags = ()
    if min(params["eta_c"], 1.0 - params["eta_c"]) < 1e-6:
        flags = ("eta_c at the boundary of [0, 1]",)
    return FitResult(params, sigmas, rms, lm.converged, lm.n_iter, lm.message, flags,
                     {"poly": tuple(map(float, coef)), "poly_domain": tuple(domain),
                      "n_traces": prob.nt, "analytic_jac": prob.jac,
                      "residual_fn": prob.residual, "x_scaled": theta})


def coherent_models(fit: FitResult) -> list[CoherentResponseModel]:
    """One CoherentResponseModel per fitted trace."""
    eta_c = min(max(fit.params["eta_c"], 0.0), 1.0)
    return [CoherentResponseModel(fit.params["kappa"], fit.params[f"delta_{i}"], eta_c,
                                  tuple(fit.extra["poly"]), tuple(fit.extra["poly_domain"]))
            for i in range(fit.extra["n_traces"])]


def check_s21_jacobian(fit: FitResult) -> float:
    """Max relative difference between analytic and finite-difference Jacobians."""
    x = fit.extra["x_scaled"]
    Ja = fit.extra["analytic_jac"](x)
    Jn = numeric_jacobian(fit.extra["residual_fn"], x)
    return float(np.max(np.abs(Ja - Jn)) / max(np.max(np.abs(Ja)), 1e-300))


# ---------------------------------------------------------------------------
# Phase lock


def pll_phase_variance(p_coherent: float, p_total: float) -> float:
    """Residual phase variance -ln(P_coherent / P_total), rad^2."""
    if not p_total > 0 or not p_coherent > 0:
        raise ValueError("powers must be positive")
    ratio = p_coherent / p_total
    if ratio > 1.0:
        raise ValueError(f"coherent power exceeds total power (ratio {ratio:.6g})")
    return -math.log(ratio)
