"""Time-domain stochastic oracle for the linearized Langevin equations.

The quantum fields are replaced by classical complex amplitudes driven by
white noise whose strength equals the symmetrized input correlations
(1/2 for the optical vacuum, n + 1/2 for the mechanical bath).  For a linear
system this reproduces every symmetrized output spectrum exactly, and the
balanced heterodyne PSD is a sum of symmetrized spectra (signal band plus
an image band that only carries vacuum), so the sideband asymmetry emerges
from the simulated noise interference without being put in by hand.

Integration uses the exact discrete-time map of the linear SDE.  The
detected output is the boxcar average of ``a_in - sqrt(kappa) a`` over each
step, sampled jointly with the state, so the step may be much longer than
the cavity lifetime as long as the band of interest stays below Nyquist.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy import linalg, signal

from .errors import InstabilityError, ParseError, StatisticsError
from .params import TWO_PI, DetectionParams
from .traces import SpectrumTrace, provenance

CHUNK = 1 << 18


@dataclass(frozen=True)
class SdeConfig:
    dt: float
    n_steps: int
    n_segments: int = 64
    seed: int = 0
    burn_in: int = 0
    n_realizations: int = 1
    method: str = "exact"

    def problems(self, m=None) -> list[str]:
        out = []
        if not self.dt > 0:
            out.append("dt must be > 0")
        if self.n_segments < 8:
            out.append("n_segments must be >= 8")
        if self.n_steps < 2 * self.n_segments:
            out.append("n_steps too short for the requested segments")
        if self.burn_in < 0 or self.n_realizations < 1:
            out.append("burn_in >= 0 and n_realizations >= 1 required")
        if self.method not in ("exact", "euler"):
            out.append("method must be 'exact' or 'euler'")
        if m is not None and self.dt > 0:
            if self.method == "euler":
                fastest = max(m.kappa, m.gamma_eff, abs(m.delta_mech), abs(m.delta_cav))
                if self.dt * fastest >= 0.1:
                    out.append(f"euler step too coarse: dt*rate = {self.dt * fastest:.3g} >= 0.1")
            else:
                band = abs(m.delta_mech) + 10.0 * m.gamma_eff
                if self.dt * band >= math.pi:
                    out.append(f"dt aliases the sideband band: dt*(|delta|+10 Gamma) = "
                               f"{self.dt * band:.3g} >= pi")
        return out


@dataclass
class Trajectory:
    """Sampled intracavity (a), mechanical (b) and detected output fields.

    ``a_out[n]`` is the output averaged over step n when ``averaged`` is
    true (exact method) and a point sample otherwise.  ``a`` and ``b`` are
    None for output-only runs.
    """

    a: np.ndarray | None
    b: np.ndarray | None
    a_out: np.ndarray
    dt: float
    averaged: bool = True

    def __post_init__(self):
        n = len(self.a_out)
        if any(z is not None and len(z) != n for z in (self.a, self.b)):
            raise ValueError("trajectory channels must have equal length")

    def __len__(self):
        return len(self.a_out)


def drift_matrix(m) -> np.ndarray:
    """Real drift for x = (Re a, Im a, Re b, Im b), written out from the
    Langevin equations for da/dt and db/dt."""
    k2, g2 = 0.5 * m.kappa, 0.5 * m.gamma_eff
    D, d = m.delta_cav, m.delta_mech
    gs, gd = m.g_plus + m.g_minus, m.g_plus - m.g_minus
    return np.array([
        [-k2, -D, 0.0, gd],
        [D, -k2, gs, 0.0],
        [0.0, gd, -g2, -d],
        [gs, 0.0, d, -g2],
    ])


def diffusion_vector(m) -> np.ndarray:
    sa = 0.5 * math.sqrt(m.kappa)
    sb = math.sqrt(m.gamma_eff * (m.n_bath + 0.5) / 2.0)
    return np.array([sa, sa, sb, sb])


def _augmented(m):
    """Drift F and noise loading G for (x, integrated output)."""
    F = np.zeros((6, 6))
    F[:4, :4] = drift_matrix(m)
    F[4, 0] = F[5, 1] = -math.sqrt(m.kappa)
    G = np.zeros((6, 4))
    G[:4, :4] = np.diag(diffusion_vector(m))
    G[4, 0] = G[5, 1] = 0.5
    return F, G


def exact_step(m, dt: float):
    """Transition matrix and increment covariance over one step.

    Van Loan's block exponential on a short sub-step, then repeated
    doubling Q(2t) = Q(t) + Phi(t) Q(t) Phi(t)^T, which stays accurate when
    kappa * dt is large.
    """
    F, G = _augmented(m)
    norm = np.max(np.abs(F))
    k = max(0, int(math.ceil(math.log2(max(norm * dt, 1e-300) / 1e-2))))
    t0 = dt / 2**k
    W = G @ G.T
    M = np.zeros((12, 12))
    M[:6, :6] = -F * t0
    M[:6, 6:] = W * t0
    M[6:, 6:] = F.T * t0
    E = linalg.expm(M)
    phi = E[6:, 6:].T
    Q = phi @ E[:6, 6:]
    for _ in range(k):
        Q = Q + phi @ Q @ phi.T
        phi = phi @ phi
    return phi, 0.5 * (Q + Q.T)


def euler_step(m, dt: float):
    F, G = _augmented(m)
    phi = np.eye(6) + F * dt
    L = G * math.sqrt(dt)
    return phi, L @ L.T


def _sqrtm_psd(Q):
    w, V = np.linalg.eigh(Q)
    return V * np.sqrt(np.clip(w, 0.0, None))


def stationary_covariance(m) -> np.ndarray:
    A = drift_matrix(m)
    B = np.diag(diffusion_vector(m))
    return linalg.solve_continuous_lyapunov(A, -B @ B.T)


def check_stable(m):
    eig = np.linalg.eigvals(drift_matrix(m))
    if np.any(eig.real >= 0):
        raise InstabilityError("drift has a non-decaying mode; refusing to integrate",
                               eigenvalue=complex(eig[np.argmax(eig.real)]))


@njit(cache=True, nogil=True)
def _propagate(phi, lq, x, z, xs, ys):
    """Run s_{n+1} = phi[:, :4] x_n + lq z_n; returns failing step or -1."""
    n_steps = z.shape[0]
    for n in range(n_steps):
        s = np.zeros(6)
        for i in range(6):
            acc = 0.0
            for j in range(4):
                acc += phi[i, j] * x[j]
            for j in range(6):
                acc += lq[i, j] * z[n, j]
            s[i] = acc
        for i in range(4):
            x[i] = s[i]
            xs[n, i] = s[i]
        ys[n, 0] = s[4]
        ys[n, 1] = s[5]
        if abs(s[0]) > 1e150 or abs(s[2]) > 1e150 or s[0] != s[0]:
            return n
    return -1


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, realization index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def integrate(m, cfg: SdeConfig, realization: int = 0, keep_state: bool = True) -> Trajectory:
    """Sample one realization; ``keep_state=False`` stores only the output."""
    problems = cfg.problems(m)
    if problems:
        raise ValueError("; ".join(problems))
    check_stable(m)
    if cfg.method == "exact":
        phi, Q = exact_step(m, cfg.dt)
    else:
        phi, Q = euler_step(m, cfg.dt)
    lq = _sqrtm_psd(Q)
    rng = realization_rng(cfg.seed, realization)
    x = rng.multivariate_normal(np.zeros(4), stationary_covariance(m), method="eigh")

    total = cfg.burn_in + cfg.n_steps
    xs = np.empty((cfg.n_steps, 4)) if keep_state else None
    a_out = np.empty(cfg.n_steps, dtype=complex)
    cx = np.empty((min(CHUNK, total), 4))
    cy = np.empty((min(CHUNK, total), 2))
    done = 0
    while done < total:
        n = min(CHUNK, total - done)
        z = rng.standard_normal((n, 6))
        bad = _propagate(phi, lq, x, z, cx[:n], cy[:n])
        if bad >= 0:
            raise InstabilityError(f"trajectory diverged at step {done + bad}")
        lo = max(0, cfg.burn_in - done)
        dst = done + lo - cfg.burn_in
        if keep_state:
            xs[dst:dst + n - lo] = cx[lo:n]
        # integrated output over one step, divided by dt
        a_out[dst:dst + n - lo] = (cy[lo:n, 0] + 1j * cy[lo:n, 1]) / cfg.dt
        done += n
    a = b = None
    if keep_state:
        a = xs[:, 0] + 1j * xs[:, 1]
        b = xs[:, 2] + 1j * xs[:, 3]
    return Trajectory(a, b, a_out, cfg.dt, averaged=cfg.method == "exact")


def quadratures(b):
    """X = (b + b*)/sqrt2, Y = i(b* - b)/sqrt2 in the rotating frame."""
    return math.sqrt(2.0) * b.real, math.sqrt(2.0) * b.imag


def _segment_length(n: int, n_segments: int) -> int:
    # 50 % overlap: n_seg = (n - L) / (L / 2) + 1
    L = int(2 * n // (n_segments + 1))
    return L - (L % 2)


def raw_spectrum(t: Trajectory, nperseg: int):
    """Welch (Hann, 50 % overlap) two-sided density of the output, fftshifted,
    plus the number of averaged segments."""
    if nperseg < 8 or len(t) < nperseg:
        raise StatisticsError("trajectory shorter than one segment")
    f, P = signal.welch(t.a_out, fs=1.0 / t.dt, window="hann", nperseg=nperseg,
                        noverlap=nperseg // 2, return_onesided=False,
                        detrend=False, scaling="density")
    order = np.argsort(f)
    n_seg = (len(t) - nperseg) // (nperseg // 2) + 1
    return f[order], P[order], n_seg


def _to_heterodyne(f, P, dt, averaged, eta):
    if averaged:
        # undo the boxcar attenuation of the structured part; the white
        # part already aliases back to a flat 1/2
        P = 0.5 + (P - 0.5) / np.sinc(f * dt) ** 2
    # signal band at +v plus an image band holding only vacuum (1/2)
    full = 0.5 + P
    return eta * full + (1.0 - eta)


def _effective_segments(n_seg: int) -> float:
    # Hann at 50 % overlap: adjacent periodograms correlate at (1/3)^2
    return n_seg / (1.0 + 2.0 / 9.0)


def estimate_psd(t: Trajectory, detect: DetectionParams, m=None, n_segments: int = 64,
                 nperseg: int | None = None, band: float | None = None) -> SpectrumTrace:
    """Heterodyne PSD estimate from one trajectory, vacuum floor at 1."""
    if nperseg is None:
        nperseg = _segment_length(len(t), n_segments)
    f, P, n_seg = raw_spectrum(t, nperseg)
    if n_seg < 8:
        raise StatisticsError(f"only {n_seg} segments; need >= 8 for a usable estimate")
    psd = _to_heterodyne(f, P, t.dt, t.averaged, detect.eta)
    return _crop(f, psd, band, provenance("sde", None, n_segments=n_seg,
                                          effective_segments=_effective_segments(n_seg),
                                          eta=detect.eta, dt=t.dt,
                                          method="exact" if t.averaged else "euler",
                                          n_bar=getattr(m, "n_bath", None)))


def _crop(f, psd, band, meta):
    w = TWO_PI * f
    if band is not None:
        keep = np.abs(w) <= band
        w, psd = w[keep], psd[keep]
    return SpectrumTrace(w, np.clip(psd, 0.0, None), meta)


def oracle_psd(m, detect: DetectionParams, cfg: SdeConfig, nperseg: int | None = None,
               band: float | None = None, threads: int = 1) -> SpectrumTrace:
    """Average the Welch estimates of ``cfg.n_realizations`` independent runs.

    Realizations own their RNG streams; the average is summed in
    realization order, so the result does not depend on ``threads``.
    """
    if nperseg is None:
        nperseg = _segment_length(cfg.n_steps, cfg.n_segments)

    def one(i):
        t = integrate(m, cfg, realization=i, keep_state=False)
        return raw_spectrum(t, nperseg)

    idx = range(cfg.n_realizations)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, idx))
    else:
        results = [one(i) for i in idx]
    f = results[0][0]
    P = np.zeros_like(results[0][1])
    total_seg = 0
    for _, Pi, ni in results:
        P += Pi
        total_seg += ni
    P /= len(results)
    if total_seg < 8:
        raise StatisticsError(f"only {total_seg} segments; need >= 8")
    psd = _to_heterodyne(f, P, cfg.dt, cfg.method == "exact", detect.eta)
    meta = provenance("sde", None, n_segments=total_seg,
                      effective_segments=_effective_segments(total_seg),
                      eta=detect.eta, n_bar=m.n_bath, seed=cfg.seed, dt=cfg.dt,
                      n_steps=cfg.n_steps, n_realizations=cfg.n_realizations,
                      method=cfg.method)
    return _crop(f, psd, band, meta)


def psd_sigma(trace: SpectrumTrace) -> np.ndarray:
    """One-sigma statistical error per bin of an oracle estimate.

    Only the simulated signal band fluctuates; the image-band vacuum and
    the admixed vacuum are exact.
    """
    eta = trace.meta.get("eta", 1.0)
    k = trace.meta["effective_segments"]
    corrected = (trace.psd - (1.0 - eta)) / eta - 0.5
    gain = np.ones_like(corrected)
    if trace.meta.get("method", "exact") == "exact" and "dt" in trace.meta:
        gain = np.sinc(trace.freq_hz * trace.meta["dt"]) ** 2
    raw = 0.5 + (corrected - 0.5) * gain
    return eta * raw / (gain * math.sqrt(k))


# ---------------------------------------------------------------------------
# Checkpoints: little-endian, 32-byte header then 6 float64 per sample.
#   bytes 0-7   magic b"OBAETRJ1"
#   bytes 8-15  uint64 sample count
#   bytes 16-23 float64 dt in seconds
#   byte  24    uint8 averaged flag, bytes 25-31 zero padding
#   samples     a.re a.im b.re b.im a_out.re a_out.im

_MAGIC = b"OBAETRJ1"
_HEADER = struct.Struct("<8sQdB7x")


def write_trajectory(path, t: Trajectory):
    if t.a is None or t.b is None:
        raise ValueError("output-only trajectory has no state to checkpoint")
    data = np.empty((len(t), 6), dtype="<f8")
    for k, z in enumerate((t.a, t.b, t.a_out)):
        data[:, 2 * k] = z.real
        data[:, 2 * k + 1] = z.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, len(t), float(t.dt), int(t.averaged)))
        fh.write(data.tobytes())


def read_trajectory(path) -> Trajectory:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError("truncated trajectory header", path=path)
    magic, n, dt, averaged = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ParseError("not a trajectory checkpoint", path=path)
    if len(raw) - _HEADER.size != 48 * n:
        raise ParseError(f"expected {n} samples, found {(len(raw) - _HEADER.size) / 48:g}",
                         path=path)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    body = body.reshape(n, 6)
    z = [body[:, 2 * k] + 1j * body[:, 2 * k + 1] for k in range(3)]
    return Trajectory(z[0], z[1], z[2], dt, bool(averaged))
