"""Physical parameter records and closed-form derived quantities.

Every rate is stored as an angular frequency in rad/s.  Config files and
the command line speak ordinary frequency in Hz; conversion happens only at
that boundary (see :func:`load_config`).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, DomainError

TWO_PI = 2.0 * math.pi


def hz_to_rad(f):
    return TWO_PI * f


def rad_to_hz(w):
    return w / TWO_PI


@dataclass(frozen=True)
class CavityParams:
    kappa: float
    kappa_ex: float
    detuning_carrier: float = 0.0

    @property
    def eta_c(self) -> float:
        """Cavity coupling parameter kappa_ex / kappa."""
        return self.kappa_ex / self.kappa

    def problems(self) -> list[str]:
        out = []
        if not self.kappa > 0:
            out.append(f"kappa must be > 0 (got {self.kappa!r})")
        if not 0 <= self.kappa_ex <= max(self.kappa, 0.0):
            out.append(f"kappa_ex must lie in [0, kappa] (got {self.kappa_ex!r})")
        if not math.isfinite(self.detuning_carrier):
            out.append("detuning_carrier must be finite")
        return out


@dataclass(frozen=True)
class MechParams:
    omega_m: float
    gamma_int: float
    gamma_gas: float = 0.0
    n_th: float = 0.0

    @property
    def gamma_m(self) -> float:
        """Bare linewidth, intrinsic plus gas damping."""
        return self.gamma_int + self.gamma_gas

    def problems(self) -> list[str]:
        out = []
        if not self.omega_m > 0:
            out.append(f"omega_m must be > 0 (got {self.omega_m!r})")
        if not self.gamma_int > 0:
            out.append(f"gamma_int must be > 0 (got {self.gamma_int!r})")
        if not self.gamma_gas >= 0:
            out.append(f"gamma_gas must be >= 0 (got {self.gamma_gas!r})")
        if not self.n_th >= 0:
            out.append(f"n_th must be >= 0 (got {self.n_th!r})")
        return out


@dataclass(frozen=True)
class DriveParams:
    g0: float
    n_probe: float
    n_cool: float = 0.0
    delta: float = 0.0
    probe_imbalance: float = 1.0

    def problems(self) -> list[str]:
        out = []
        if not self.g0 > 0:
            out.append(f"g0 must be > 0 (got {self.g0!r})")
        if not self.n_probe >= 0:
            out.append(f"n_probe must be >= 0 (got {self.n_probe!r})")
        if not self.n_cool >= 0:
            out.append(f"n_cool must be >= 0 (got {self.n_cool!r})")
        if not math.isfinite(self.delta):
            out.append("delta must be finite")
        if not self.probe_imbalance > 0:
            out.append(f"probe_imbalance must be > 0 (got {self.probe_imbalance!r})")
        return out


@dataclass(frozen=True)
class DetectionParams:
    eta: float = 1.0
    delta_lo: float = TWO_PI * 100e6

    def problems(self) -> list[str]:
        out = []
        if not 0 < self.eta <= 1:
            out.append(f"eta must lie in (0, 1] (got {self.eta!r})")
        if not math.isfinite(self.delta_lo):
            out.append("delta_lo must be finite")
        return out


@dataclass(frozen=True)
class SystemParams:
    cavity: CavityParams
    mech: MechParams
    drive: DriveParams
    detect: DetectionParams = field(default_factory=DetectionParams)

    def problems(self) -> list[str]:
        return (
            self.cavity.problems()
            + self.mech.problems()
            + self.drive.problems()
            + self.detect.problems()
        )

    def validate(self) -> "SystemParams":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    @property
    def resolved_sideband(self) -> bool:
        """Diagnostic only: kappa / (4 omega_m) < 1, the bad-cavity expansion parameter."""
        return self.cavity.kappa < 4.0 * self.mech.omega_m

    def replace(self, **changes) -> "SystemParams":
        """Copy with leaf fields changed, e.g. ``p.replace(delta=0.0)``."""
        groups = {}
        for name, value in changes.items():
            for group in ("cavity", "mech", "drive", "detect"):
                sub = getattr(self, group)
                if name in {f.name for f in dataclasses.fields(sub)}:
                    groups.setdefault(group, {})[name] = value
                    break
            else:
                raise TypeError(f"unknown parameter {name!r}")
        kw = {g: dataclasses.replace(getattr(self, g), **v) for g, v in groups.items()}
        return dataclasses.replace(self, **kw)


def single_photon_cooperativity(p: SystemParams) -> float:
    """4 g0^2 / (kappa Gamma_m), relative to the bare linewidth."""
    gm = p.mech.gamma_m
    if not gm > 0:
        raise DomainError("bare mechanical linewidth must be positive")
    return 4.0 * p.drive.g0**2 / (p.cavity.kappa * gm)


def cooperativity_cool(p: SystemParams) -> float:
    return single_photon_cooperativity(p) * p.drive.n_cool


def effective_linewidth(p: SystemParams) -> float:
    """Linewidth seen by the probes after cooling-tone damping."""
    return p.mech.gamma_m * (1.0 + cooperativity_cool(p))


def cooperativity_probe(p: SystemParams) -> float:
    """Probe cooperativity C = 4 g0^2 n_p / (kappa Gamma_eff)."""
    geff = effective_linewidth(p)
    if not geff > 0 or not p.cavity.kappa > 0:
        raise DomainError("cooperativity undefined for zero linewidth")
    return 4.0 * p.drive.g0**2 * p.drive.n_probe / (p.cavity.kappa * geff)


def cooled_occupation(p: SystemParams, heating: float = 0.0) -> float:
    """Sideband-cooled occupation n_th / (1 + C_cool), plus optional heating.

    ``heating`` is an additive occupation (e.g. from optical absorption);
    no model for it is assumed here.
    """
    c_cool = cooperativity_cool(p)
    if c_cool < 0:
        raise DomainError("cooling cooperativity must be >= 0")
    return p.mech.n_th / (1.0 + c_cool) + heating


def coupling_rates(p: SystemParams) -> tuple[float, float]:
    """Drive-enhanced couplings (g_plus, g_minus).

    The red probe carries ``g0 sqrt(n_probe)``; the blue probe is scaled by
    ``probe_imbalance``.
    """
    g_minus = p.drive.g0 * math.sqrt(p.drive.n_probe)
    return p.drive.probe_imbalance * g_minus, g_minus


def with_cooperativity(p: SystemParams, c: float) -> SystemParams:
    """Rescale the probe photon number so that cooperativity_probe == c."""
    if c < 0:
        raise DomainError("cooperativity must be >= 0")
    n_p = c * p.cavity.kappa * effective_linewidth(p) / (4.0 * p.drive.g0**2)
    return p.replace(n_probe=n_p)


def with_cooling_cooperativity(p: SystemParams, c_cool: float) -> SystemParams:
    """Rescale the cooling photon number so that cooperativity_cool == c_cool."""
    n_c = c_cool / single_photon_cooperativity(p)
    return p.replace(n_cool=n_c)


# ---------------------------------------------------------------------------
# Operating points of the two reported experiments.

def fig3_params() -> SystemParams:
    """Delta-sweep operating point: Gamma_eff/2pi ~ 607 kHz, C = 0.7, eta = 0.04.

    The bare linewidth is 84 kHz intrinsic plus gas damping chosen so that
    Gamma_m/2pi = 126.5 kHz; the cooling and probe photon numbers are then
    solved so that C_cool = 3.8 and C = 0.7 hold exactly.
    """
    p = SystemParams(
        cavity=CavityParams(kappa=hz_to_rad(1.7e9), kappa_ex=0.3 * hz_to_rad(1.7e9)),
        mech=MechParams(
            omega_m=hz_to_rad(5.3e9),
            gamma_int=hz_to_rad(84e3),
            gamma_gas=hz_to_rad(42.5e3),
            n_th=7.9,
        ),
        drive=DriveParams(g0=hz_to_rad(780e3), n_probe=290.0, n_cool=320.0,
                          delta=hz_to_rad(3e6)),
        detect=DetectionParams(eta=0.04),
    )
    p = with_cooling_cooperativity(p, 3.8)
    return with_cooperativity(p, 0.7)


def fig4_params() -> SystemParams:
    """Power-sweep operating point: n_c = 420, C_cool ~ 5.0, n_th ~ 6.3."""
    p = SystemParams(
        cavity=CavityParams(kappa=hz_to_rad(1.7e9), kappa_ex=0.3 * hz_to_rad(1.7e9)),
        mech=MechParams(omega_m=hz_to_rad(5.3e9), gamma_int=hz_to_rad(84e3),
                        gamma_gas=0.0, n_th=6.3),
        drive=DriveParams(g0=hz_to_rad(780e3), n_probe=290.0, n_cool=420.0,
                          delta=hz_to_rad(3e6)),
        detect=DetectionParams(eta=0.04),
    )
    # gas damping such that 420 cooling photons give C_cool = 5.0
    gm = 4.0 * p.drive.g0**2 * 420.0 / (p.cavity.kappa * 5.0)
    return p.replace(gamma_gas=gm - p.mech.gamma_int)


# ---------------------------------------------------------------------------
# Flat key = value config files.

# config key -> (group field, is_rate_in_hz)
_PARAM_KEYS = {
    "kappa_hz": ("kappa", True),
    "kappa_ex_hz": ("kappa_ex", True),
    "detuning_hz": ("detuning_carrier", True),
    "omega_m_hz": ("omega_m", True),
    "gamma_int_hz": ("gamma_int", True),
    "gamma_gas_hz": ("gamma_gas", True),
    "n_th": ("n_th", False),
    "g0_hz": ("g0", True),
    "n_probe": ("n_probe", False),
    "n_cool": ("n_cool", False),
    "delta_hz": ("delta", True),
    "probe_imbalance": ("probe_imbalance", False),
    "eta": ("eta", False),
    "delta_lo_hz": ("delta_lo", True),
}

# analysis-level keys that are not part of the physical record
_EXTRA_KEYS = {
    "n_bar": None,          # explicit occupation for the spectrum engines
    "n_heating": 0.0,       # additive heating on top of sideband cooling
    "beta_heating": 3.85,   # absorption heating quanta per unit C
    "n_base": 3.0,          # power-sweep occupation at C -> 0
    "scheme": "heterodyne-BAE",
}

_REQUIRED = ("kappa_hz", "omega_m_hz", "gamma_int_hz", "g0_hz", "n_probe")


@dataclass(frozen=True)
class RunConfig:
    """A validated :class:`SystemParams` plus analysis settings."""

    params: SystemParams
    n_bar: float | None = None
    n_heating: float = 0.0
    beta_heating: float = 3.85
    n_base: float = 3.0
    scheme: str = "heterodyne-BAE"

    def occupation(self) -> float:
        """Occupation fed to the spectrum engines."""
        if self.n_bar is not None:
            return self.n_bar
        return cooled_occupation(self.params, self.n_heating)

    def to_mapping(self) -> dict[str, object]:
        return config_mapping(self)


def config_mapping(cfg: RunConfig) -> dict[str, object]:
    p = cfg.params
    flat = {}
    for group in (p.cavity, p.mech, p.drive, p.detect):
        for f in dataclasses.fields(group):
            flat[f.name] = getattr(group, f.name)
    out: dict[str, object] = {}
    for key, (name, is_rate) in _PARAM_KEYS.items():
        v = flat[name]
        out[key] = rad_to_hz(v) if is_rate else v
    if cfg.n_bar is not None:
        out["n_bar"] = cfg.n_bar
    out["n_heating"] = cfg.n_heating
    out["beta_heating"] = cfg.beta_heating
    out["n_base"] = cfg.n_base
    out["scheme"] = cfg.scheme
    return out


def dump_config(cfg: RunConfig, path=None) -> str:
    lines = ["# optobae config; rates are ordinary frequencies in Hz"]
    for key, value in config_mapping(cfg).items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate config text; reports every problem at once."""
    problems: list[str] = []
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{source}:{lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARAM_KEYS and key not in _EXTRA_KEYS:
            problems.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        if key in values:
            problems.append(f"{source}:{lineno}: duplicate key {key!r}")
            continue
        if key == "scheme":
            values[key] = value
            continue
        try:
            values[key] = float(value)
        except ValueError:
            problems.append(f"{source}:{lineno}: {key} is not a number: {value!r}")
    missing = [k for k in _REQUIRED if k not in values]
    for key in missing:
        problems.append(f"{source}: missing required key {key!r}")
    if missing:
        raise ConfigError(problems)
    syntax = problems

    kw = {}
    for key, (name, is_rate) in _PARAM_KEYS.items():
        if key in values:
            v = values[key]
            kw[name] = hz_to_rad(v) if is_rate else v
    kappa = kw["kappa"]
    params = SystemParams(
        cavity=CavityParams(kappa=kappa, kappa_ex=kw.get("kappa_ex", kappa),
                            detuning_carrier=kw.get("detuning_carrier", 0.0)),
        mech=MechParams(omega_m=kw["omega_m"], gamma_int=kw["gamma_int"],
                        gamma_gas=kw.get("gamma_gas", 0.0), n_th=kw.get("n_th", 0.0)),
        drive=DriveParams(g0=kw["g0"], n_probe=kw["n_probe"], n_cool=kw.get("n_cool", 0.0),
                          delta=kw.get("delta", 0.0),
                          probe_imbalance=kw.get("probe_imbalance", 1.0)),
        detect=DetectionParams(eta=kw.get("eta", 1.0),
                               delta_lo=kw.get("delta_lo", DetectionParams().delta_lo)),
    )
    problems = params.problems()
    extras = {k: values.get(k, d) for k, d in _EXTRA_KEYS.items()}
    if extras["n_bar"] is not None and not extras["n_bar"] >= 0:
        problems.append("n_bar must be >= 0")
    if not extras["n_heating"] >= 0:
        problems.append("n_heating must be >= 0")
    if not extras["beta_heating"] >= 0:
        problems.append("beta_heating must be >= 0")
    if not extras["n_base"] >= 0:
        problems.append("n_base must be >= 0")
    if extras["scheme"] not in ("heterodyne-BAE", "homodyne-conventional"):
        problems.append("scheme must be 'heterodyne-BAE' or 'homodyne-conventional'")
    problems = syntax + [f"{source}: {m}" for m in problems]
    if problems:
        raise ConfigError(problems)
    return RunConfig(params=params, **extras)


PRESETS = ("fig3", "fig4")


def preset_config(name: str) -> RunConfig:
    if name == "fig3":
        return RunConfig(fig3_params(), n_bar=5.6)
    if name == "fig4":
        return RunConfig(fig4_params(), beta_heating=3.85, n_base=3.0)
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")


def load_config(path_or_preset) -> RunConfig:
    """Load a config file, or a bundled preset by name (``fig3``, ``fig4``)."""
    if str(path_or_preset) in PRESETS:
        return preset_config(str(path_or_preset))
    path = Path(path_or_preset)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
