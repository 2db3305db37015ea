"""Command-line front end.

Exit codes: 0 success, 2 usage, 3 config/domain error, 4 numerical
instability, 5 fit or statistics failure, 6 I/O or parse failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, budget, fits, pipeline
from .errors import (
    ConfigError,
    DomainError,
    FitError,
    InstabilityError,
    ParseError,
    StatisticsError,
)
from .params import (
    TWO_PI,
    RunConfig,
    cooperativity_probe,
    dump_config,
    effective_linewidth,
    hz_to_rad,
    load_config,
    parse_config,
)
from .traces import SpectrumTrace, read_columns, write_columns

OUT_ENV = "OPTOBAE_OUT"
EXIT_CONFIG, EXIT_INSTABILITY, EXIT_FIT, EXIT_IO = 3, 4, 5, 6


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    seed: int
    version: str = __version__
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    duration_s: float = 0.0

    def stamp(self) -> dict:
        """The part embedded in every output file; no paths or timings."""
        return {"command": self.command, "argv": self.argv, "config": self.config,
                "seed": self.seed, "version": self.version}


class Run:
    """Output directory, format selection and manifest bookkeeping."""

    def __init__(self, args, command, cfg: RunConfig | None):
        self.out = Path(args.out or os.environ.get(OUT_ENV) or "optobae-out")
        self.fmt = args.format
        self.t0 = time.perf_counter()
        self.cfg = cfg
        argv = [a for a in (args.argv or [])]
        self.manifest = RunManifest(command, argv, cfg.to_mapping() if cfg else {}, args.seed)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ParseError(f"cannot create output directory: {exc}", path=self.out) from exc

    @property
    def csv(self):
        return self.fmt in ("csv", "both")

    @property
    def svg(self):
        return self.fmt in ("svg", "both")

    def path(self, name):
        p = self.out / name
        self.manifest.outputs.append(str(p))
        return p

    def meta(self, extra=None):
        m = dict(extra or {})
        m["manifest"] = self.manifest.stamp()
        return m

    def finish(self):
        if self.cfg is not None:
            dump_config(self.cfg, self.path("config.cfg"))
        self.manifest.duration_s = time.perf_counter() - self.t0
        p = self.out / "manifest.json"
        p.write_text(json.dumps(asdict(self.manifest), indent=2, sort_keys=True, default=str))
        return p


def _floats(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"not a comma-separated list of numbers: {text!r}") from exc


def _config(args, default="fig3") -> RunConfig:
    return load_config(args.config or default)


def _strip(argv, *flags):
    """argv without the given options (and their values)."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in flags:
            skip = True
            continue
        if any(a.startswith(f + "=") for f in flags):
            continue
        out.append(a)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_spectrum(args):
    cfg = _config(args)
    p = cfg.params
    if args.delta_mhz is not None:
        p = p.replace(delta=hz_to_rad(args.delta_mhz * 1e6))
        cfg = RunConfig(p, cfg.n_bar, cfg.n_heating, cfg.beta_heating, cfg.n_base, cfg.scheme)
    engine = args.engine or "rwa"
    run = Run(args, "spectrum", cfg)
    tr = pipeline.generate(cfg, engine, seed=args.seed, n_steps=args.steps, threads=args.threads)
    if run.csv:
        tr.to_csv(run.path("spectrum.csv"), run.meta())
    if run.svg:
        from .plotting import plot_spectrum
        plot_spectrum(tr, run.path("spectrum.svg"), run.manifest.stamp(),
                      title=f"{engine}, delta/2pi = {p.drive.delta / TWO_PI / 1e6:g} MHz")
    run.finish()
    print(f"spectrum ({engine}): {len(tr)} points, peak {tr.psd.max():.6g} -> {run.out}")
    return 0


def cmd_delta_sweep(args):
    cfg = _config(args)
    engine = args.engine or "rwa"
    deltas = [hz_to_rad(d * 1e6) for d in _floats(args.deltas_mhz)]
    run = Run(args, "delta-sweep", cfg)
    rows, cal = pipeline.delta_sweep(cfg, deltas, engine, seed=args.seed, threads=args.threads,
                                     n_steps=args.steps)
    geff = effective_linewidth(cfg.params)
    C = cooperativity_probe(cfg.params)
    n0 = cfg.occupation()
    failures = {f"{r.delta / TWO_PI:.6g}": r.note for r in rows if not r.ok}
    for i, r in enumerate(rows):
        if r.ok and run.csv:
            r.trace.to_csv(run.path(f"trace_{i:03d}.csv"), run.meta({"delta_hz": r.delta / TWO_PI}))
    expected = pipeline.occupation_curve([r.delta for r in rows], n0, C, geff)
    data = np.array([[r.delta / TWO_PI, r.n_inferred, r.sigma, e, float(r.ok)]
                     for r, e in zip(rows, expected)])
    meta = run.meta({"unit_quantum": cal.unit, "n_plus_ba": cal.n_plus_ba,
                     "cooperativity": C, "failures": failures})
    if run.csv:
        write_columns(run.path("occupancy.csv"),
                      ("delta_hz", "n_inferred", "sigma", "n_expected", "ok"), data, meta)
    if run.svg:
        from .plotting import plot_delta_sweep
        ok = data[:, 4] > 0
        span = max(abs(d) for d in deltas) or geff
        dd = np.linspace(-span, span, 401)
        plot_delta_sweep(data[ok, 0], data[ok, 1], data[ok, 2], run.path("occupancy.svg"),
                         curve=(dd / TWO_PI, pipeline.occupation_curve(dd, n0, C, geff)),
                         manifest=run.manifest.stamp())
    run.finish()
    print(f"n + n_ba (reference) = {cal.n_plus_ba:.4f}")
    for r in rows:
        status = f"{r.n_inferred:.4f}" if r.ok else f"failed: {r.note}"
        print(f"delta/2pi = {r.delta / TWO_PI / 1e6:+.3f} MHz  n_inf = {status}")
    return 0


def cmd_power_sweep(args):
    cfg = _config(args, "fig4")
    run = Run(args, "power-sweep", cfg)
    if args.input:
        run.manifest.inputs.append(args.input)
        _, _, data = read_columns(args.input)
        reg = fits.power_sweep_regression(data)
        pts = [pipeline.PowerPoint(r[0], r[1], r[0], r[2]) for r in data]
    else:
        engine = args.engine or "direct"
        pts, reg = pipeline.power_sweep(cfg, _floats(args.coops), engine, seed=args.seed,
                                        threads=args.threads, n_steps=args.steps)
    arr = np.array([[q.cooperativity, q.n_bar, q.n_ba, q.n_imp] for q in pts])
    meta = run.meta(asdict(reg))
    if run.csv:
        write_columns(run.path("power_sweep.csv"), ("cooperativity", "n_bar", "n_ba", "n_imp"),
                      arr, meta)
    if run.svg:
        from .plotting import plot_power_sweep
        plot_power_sweep(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], run.path("power_sweep.svg"),
                         fit=reg, manifest=run.manifest.stamp())
    _write_report(run.path("regression.txt"), asdict(reg))
    run.finish()
    print(f"heating coefficient = {reg.heating_coefficient:.6g} +- {reg.sigma_heating:.2g}")
    print(f"eta = {reg.eta:.6g} +- {reg.sigma_eta:.2g}")
    return 0


def _write_report(path, items):
    lines = []
    for k, v in items.items():
        if isinstance(v, float):
            v = repr(v)
        elif not isinstance(v, str):
            v = json.dumps(v, default=str)
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def _read_trace(path):
    meta, _, data = read_columns(path)
    if data.shape[0] == 0:
        raise ParseError("no data rows", path=path)
    if data.shape[1] < 2:
        raise ParseError("need two columns (frequency_hz, value)", path=path)
    return meta, TWO_PI * data[:, 0], data[:, 1]


def cmd_fit(args):
    run = Run(args, "fit", None)
    run.manifest.inputs.extend(args.files)
    loaded = [_read_trace(f) for f in args.files]
    report = {"model": args.model, "files": args.files}
    if args.model == "lorentzian":
        for i, (meta, w, y) in enumerate(loaded):
            tr = SpectrumTrace(w, y, meta)
            delta = hz_to_rad(args.delta_mhz * 1e6) if args.delta_mhz is not None else None
            fit, pair = fits.fit_double_lorentzian(tr, delta=delta)
            key = f"trace{i}"
            report[f"{key}.converged"] = fit.converged
            report[f"{key}.flags"] = list(fit.flags)
            for k, v in fit.params.items():
                scale = TWO_PI if (k.startswith("center") or k == "hwhm") else 1.0
                report[f"{key}.{k}" + ("_hz" if scale != 1.0 else "")] = v / scale
            if pair is not None:
                report[f"{key}.n_plus_ba"] = fits.asymmetry_calibrate(pair)
                report[f"{key}.unit_quantum"] = fits.quantum_unit(pair)
                report[f"{key}.width_hz"] = pair.width / TWO_PI
            if not fit.converged:
                raise FitError(f"{args.files[i]}: {fit.message} {fit.flags}")
            if run.svg:
                from .plotting import plot_spectrum
                n = (len(fit.params) - 3) // 2
                u = tr.freq_offsets
                model = np.full_like(u, fit.params["baseline"])
                for k in range(1, n + 1):
                    s = (u - fit.params[f"center_{k}"]) / fit.params["hwhm"]
                    model += fit.params[f"height_{k}"] / (1 + s * s)
                plot_spectrum(tr, run.path(f"fit_{i:03d}.svg"), run.manifest.stamp(), overlay=model)
    else:
        traces = [(w, y) for _, w, y in loaded]
        fit = fits.fit_s21(traces, joint=True, order=args.order, sign=args.sign)
        if not fit.converged:
            raise FitError(f"S21 fit did not converge: {fit.message}")
        report["converged"] = fit.converged
        report["residual_rms"] = fit.residual_rms
        report["kappa_hz"] = fit.params["kappa"] / TWO_PI
        report["sigma_kappa_hz"] = fit.sigmas["kappa"] / TWO_PI
        report["eta_c"] = fit.params["eta_c"]
        report["sigma_eta_c"] = fit.sigmas["eta_c"]
        for i in range(len(traces)):
            report[f"delta_{i}_hz"] = fit.params[f"delta_{i}"] / TWO_PI
            report[f"sigma_delta_{i}_hz"] = fit.sigmas[f"delta_{i}"] / TWO_PI
        report["poly"] = list(fit.extra["poly"])
        report["poly_domain_hz"] = [d / TWO_PI for d in fit.extra["poly_domain"]]
        report["flags"] = list(fit.flags)
        if run.svg:
            from .plotting import plot_s21
            models = fits.coherent_models(fit)
            ev = [fits.s21_magnitude(m, g) for m, (g, _) in zip(models, traces)]
            plot_s21(traces, ev, run.path("fit_s21.svg"), run.manifest.stamp())
    _write_report(run.path("fit_report.txt"), report)
    run.finish()
    for k, v in report.items():
        print(f"{k} = {v}")
    return 0


def cmd_budget(args):
    cfg = _config(args)
    eta = args.eta if args.eta is not None else cfg.params.detect.eta
    C = args.coop if args.coop is not None else cooperativity_probe(cfg.params)
    beta = args.beta if args.beta is not None else cfg.beta_heating
    scheme = args.scheme or cfg.scheme
    try:
        b = budget.build_budget(eta, C, beta, scheme)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run = Run(args, "budget", cfg)
    table = budget.budget_table(b)
    if run.csv:
        p = run.path("budget.csv")
        p.write_text("".join(f"# {k}: {json.dumps(v)}\n" for k, v in run.meta().items())
                     + budget.budget_csv(b))
    run.path("budget.txt").write_text(table)
    run.finish()
    sys.stdout.write(table)
    return 0


def cmd_replay(args):
    try:
        man = json.loads(Path(args.manifest).read_text())
    except (OSError, ValueError) as exc:
        raise ParseError(f"unreadable manifest: {exc}", path=args.manifest) from exc
    out = Path(args.out or os.environ.get(OUT_ENV) or "optobae-replay")
    out.mkdir(parents=True, exist_ok=True)
    argv = list(man["argv"])
    if man.get("config"):
        text = "\n".join(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}"
                         for k, v in man["config"].items())
        parse_config(text, source="manifest")  # validate before running
        cfg_path = out / "replay.cfg"
        cfg_path.write_text(text + "\n")
        argv = argv[:1] + ["--config", str(cfg_path)] + argv[1:]
    argv = argv[:1] + ["--out", str(out)] + argv[1:]
    return main(argv)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file or preset name (fig3, fig4)")
    common.add_argument("--engine", help="rwa | matrix | sde (power-sweep also: direct)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./optobae-out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--format", choices=("csv", "svg", "both"), default="both")
    common.add_argument("--steps", type=int, default=pipeline.SDE_STEPS,
                        help="SDE samples per trace")

    ap = argparse.ArgumentParser(prog="optobae", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", parents=[common], help="heterodyne PSD trace")
    s.add_argument("--delta-mhz", type=float, help="override the two-tone offset")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("delta-sweep", parents=[common], help="inferred occupation vs delta")
    s.add_argument("--deltas-mhz", default=",".join(f"{x:g}" for x in np.linspace(-3, 3, 13)))
    s.set_defaults(func=cmd_delta_sweep)

    s = sub.add_parser("power-sweep", parents=[common], help="heating and efficiency vs C")
    s.add_argument("--coops", default="0.25,0.5,0.75,1.0,1.25,1.5")
    s.add_argument("--input", help="measured points CSV: C, n_bar, n_imp [, sigmas]")
    s.set_defaults(func=cmd_power_sweep)

    s = sub.add_parser("fit", parents=[common], help="fit measured traces")
    s.add_argument("files", nargs="+")
    s.add_argument("--model", choices=("lorentzian", "s21"), default="lorentzian")
    s.add_argument("--order", type=int, default=6, help="S21 prefactor polynomial order")
    s.add_argument("--sign", type=float, default=1.0, help="reported sign of the S21 detuning")
    s.add_argument("--delta-mhz", type=float, help="two-tone offset locating the Stokes peak")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("budget", parents=[common], help="noise budget table")
    s.add_argument("--eta", type=float)
    s.add_argument("--coop", type=float)
    s.add_argument("--beta", type=float, help="heating coefficient")
    s.add_argument("--scheme", choices=budget.SCHEMES)
    s.set_defaults(func=cmd_budget)

    s = sub.add_parser("replay", help="re-run a command from its manifest.json")
    s.add_argument("manifest")
    s.add_argument("--out")
    s.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    args.argv = _strip(argv, "--out", "--config", "--threads")
    try:
        return args.func(args)
    except ConfigError as exc:
        for prob in exc.problems:
            print(f"config error: {prob}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except (FitError, StatisticsError) as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ParseError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY


if __name__ == "__main__":
    sys.exit(main())
