"""Regenerate the bundled configs and synthetic fixtures (seeded)."""

from pathlib import Path

import numpy as np

from optobae import fits, rwa
from optobae.params import TWO_PI, dump_config, preset_config
from optobae.traces import write_columns

DATA = Path(__file__).resolve().parents[1] / "src" / "optobae" / "data"

S21_KAPPA_HZ = 1.7e9
S21_ETA_C = 0.3
S21_POLY = (1.0, 0.15, -0.1, 0.05, 0.03)  # quartic modulation-index prefactor
S21_DELTAS = (0.15, 0.3, 0.5, 0.75, 1.0)  # in units of kappa
S21_NOISE = 0.01  # additive, fraction of each trace's peak


def s21_fixture(seed=7):
    rng = np.random.default_rng(seed)
    om = np.linspace(TWO_PI * 10e6, TWO_PI * 4e9, 401)
    dom = (float(om[0]), float(om[-1]))
    for i, d in enumerate(S21_DELTAS):
        delta_hz = d * S21_KAPPA_HZ
        m = fits.CoherentResponseModel(TWO_PI * S21_KAPPA_HZ, TWO_PI * delta_hz, S21_ETA_C,
                                       S21_POLY, dom)
        y = fits.s21_magnitude(m, om)
        y = y + S21_NOISE * y.max() * rng.standard_normal(om.size)
        meta = {"generator": "s21-synthetic", "seed": seed, "kappa_hz": S21_KAPPA_HZ,
                "eta_c": S21_ETA_C, "delta_hz": delta_hz, "mod_index_poly": list(S21_POLY),
                "noise_fraction": S21_NOISE}
        write_columns(DATA / f"s21_trace_{i}.csv", ("frequency_hz", "value"),
                      np.column_stack([om / TWO_PI, y]), meta)


def lorentzian_fixture(seed=11, noise=0.005):
    cfg = preset_config("fig3")
    tr = rwa.heterodyne_psd_rwa(cfg.params, n_bar=cfg.n_bar)
    rng = np.random.default_rng(seed)
    psd = tr.psd + noise * rng.standard_normal(tr.psd.size)
    meta = dict(tr.meta)
    meta.update(seed=seed, noise_sigma=noise,
                n_plus_ba=cfg.n_bar + meta["cooperativity"],
                delta_hz=cfg.params.drive.delta / TWO_PI)
    write_columns(DATA / "lorentzian_noisy.csv", ("frequency_hz", "value"),
                  np.column_stack([tr.freq_hz, psd]), meta)


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    for name in ("fig3", "fig4"):
        dump_config(preset_config(name), DATA / f"{name}.cfg")
    s21_fixture()
    lorentzian_fixture()


if __name__ == "__main__":
    main()
