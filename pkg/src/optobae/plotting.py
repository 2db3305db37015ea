"""SVG figures; Agg backend, no display needed."""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (6.0, 4.0),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "optobae",  # stable element ids
    "svg.fonttype": "none",
}


def _save(fig, path, manifest=None):
    meta = {"Creator": "optobae", "Date": None}
    if manifest is not None:
        meta["Description"] = json.dumps(manifest, sort_keys=True, default=str)
    fig.savefig(path, format="svg", metadata=meta, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_spectrum(trace, path, manifest=None, overlay=None, title=None):
    """PSD versus offset frequency with the vacuum floor at 1."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot(trace.freq_hz / 1e6, trace.psd, lw=1.0, label="PSD")
        if overlay is not None:
            ax.plot(trace.freq_hz / 1e6, overlay, lw=1.0, ls="--", label="fit")
        ax.axhline(1.0, color="k", lw=0.7, ls=":", label="vacuum")
        ax.set_xlabel("offset from LO [MHz]")
        ax.set_ylabel("PSD [vacuum units]")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right", frameon=False)
        return _save(fig, path, manifest)


def plot_delta_sweep(delta_hz, n_inf, sigma, path, curve=None, manifest=None):
    """Inferred occupation versus two-tone offset delta."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        d = np.asarray(delta_hz) / 1e6
        ax.errorbar(d, n_inf, yerr=sigma, fmt="o", ms=4, capsize=2, label="fitted")
        if curve is not None:
            cx, cy = curve
            ax.plot(np.asarray(cx) / 1e6, cy, lw=1.0, label="expected")
        ax.set_xlabel(r"$\delta/2\pi$ [MHz]")
        ax.set_ylabel(r"inferred occupation [quanta]")
        ax.legend(frameon=False)
        return _save(fig, path, manifest)


def plot_power_sweep(C, n_bar, n_ba, n_imp, path, fit=None, manifest=None):
    """Occupation and backaction (left axis), imprecision (right axis) vs C."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        C = np.asarray(C)
        ax.plot(C, n_bar, "o", color="C3", label=r"$\bar n$")
        ax.plot(C, n_ba, "-", color="C0", label=r"$n_{ba}=C$")
        if fit is not None:
            cc = np.linspace(0.0, C.max() * 1.05, 100)
            ax.plot(cc, fit.n_base + fit.heating_coefficient * cc, "--", color="C3",
                    label=rf"fit $\beta$={fit.heating_coefficient:.3g}")
        ax.set_xlabel("cooperativity C")
        ax.set_ylabel("quanta")
        ax2 = ax.twinx()
        ax2.grid(False)
        ax2.plot(C, n_imp, "s", color="C2", label=r"$n_{imp}$")
        if fit is not None:
            cc = np.linspace(C.min() * 0.8, C.max() * 1.05, 100)
            ax2.plot(cc, 1.0 / (8.0 * fit.eta * cc), ":", color="C2",
                     label=rf"fit $\eta$={fit.eta:.3g}")
        ax2.set_ylabel("imprecision [quanta]")
        h1, l1 = ax.get_legend_handles_labels()
        h2, l2 = ax2.get_legend_handles_labels()
        ax.legend(h1 + h2, l1 + l2, frameon=False, loc="upper center")
        return _save(fig, path, manifest)


def plot_s21(traces, models_eval, path, manifest=None):
    """|S21| data with fitted curves, one colour per trace."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for i, ((g, v), y) in enumerate(zip(traces, models_eval)):
            f = np.asarray(g) / (2e9 * np.pi)
            ax.plot(f, v, ".", ms=2, color=f"C{i % 10}")
            ax.plot(f, y, "-", lw=1.0, color=f"C{i % 10}")
        ax.set_xlabel(r"$\Omega/2\pi$ [GHz]")
        ax.set_ylabel(r"$|S_{21}|$")
        return _save(fig, path, manifest)
