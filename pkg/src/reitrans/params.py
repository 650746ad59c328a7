"""Physical parameters of the transducer and their config-file representation.

Every rate and frequency held by :class:`SystemParams` is angular (rad/s).
Config files carry plain Hz in keys containing ``_Hz``; the loader multiplies
those by 2*pi and the writer divides them back out, choosing the float that
reproduces the stored angular value exactly.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TWO_PI = 2.0 * math.pi

# FWHM of a Gaussian over its standard deviation, 2*sqrt(2 ln 2)
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class ParameterError(ValueError):
    """Invalid parameter or config entry; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class SystemParams:
    kappa_o_ext: float
    kappa_o_int: float
    kappa_e_ext: float
    kappa_e_int: float
    gamma_o: float
    gamma_s: float
    Gamma_o: float
    Gamma_e: float
    omega_e: float
    g_o_tot: float
    g_e_tot: float
    Omega_pump: float
    delta_oc: float = 0.0
    delta_ec: float = 0.0
    n_g: float = 0.5
    n_e1: float = 0.5
    n_e2: float = 0.0
    manifold_fraction: float = 1.0

    def __post_init__(self):
        for name in ("kappa_o_ext", "kappa_o_int", "kappa_e_ext", "kappa_e_int",
                     "gamma_o", "gamma_s", "Gamma_o", "Gamma_e", "omega_e",
                     "g_o_tot", "g_e_tot", "Omega_pump"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ParameterError(name, f"rate must be finite and >= 0, got {value!r}")
        for name in ("delta_oc", "delta_ec"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(name, "detuning must be finite")
        for name in ("n_g", "n_e1", "n_e2", "manifold_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ParameterError(name, f"must lie in [0, 1], got {value!r}")
        total = self.n_g + self.n_e1 + self.n_e2
        if total > 1.0 + 1e-12:
            raise ParameterError("populations",
                                 f"n_g + n_e1 + n_e2 = {total:.6g} exceeds 1")
        if self.Gamma_o < self.gamma_o:
            raise ParameterError("Gamma_o", "inhomogeneous optical linewidth is narrower "
                                 "than the homogeneous gamma_o")
        if self.Gamma_e < self.gamma_s:
            raise ParameterError("Gamma_e", "inhomogeneous spin linewidth is narrower "
                                 "than the homogeneous gamma_s")

    @property
    def kappa_o(self) -> float:
        return self.kappa_o_ext + self.kappa_o_int

    @property
    def kappa_e(self) -> float:
        return self.kappa_e_ext + self.kappa_e_int

    @property
    def pop_optical(self) -> float:
        """Population difference n_g - n_e2 weighting the optical coupling."""
        return self.n_g - self.n_e2

    @property
    def pop_spin(self) -> float:
        """Population difference n_e1 - n_e2 weighting the spin coupling."""
        return self.n_e1 - self.n_e2

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class MaterialParams:
    """Bulk material and geometry.

    ``confinement_eta`` is the fraction of microwave magnetic energy inside
    the transduction volume; ``optical_confinement`` is the analogous optical
    fraction (1 when the optical mode lies entirely inside the crystal).
    """

    rho: float
    d_p: float
    d_o: float
    mu_spin: float
    alpha_peak: float
    crystal_length: float
    finesse: float
    confinement_eta: float
    sound_velocity: float
    T1_optical: float
    T2_optical: float
    optical_confinement: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value) or value <= 0:
                raise ParameterError(f.name, f"must be finite and > 0, got {value!r}")
        for name in ("confinement_eta", "optical_confinement"):
            if getattr(self, name) > 1.0:
                raise ParameterError(name, "confinement fraction cannot exceed 1")

    def replace(self, **changes) -> "MaterialParams":
        return dataclasses.replace(self, **changes)


# Reference numbers for the device. Values marked "reconstructed" are
# back-solved estimates rather than measured inputs; see README.
PAPER_REFERENCE = {
    "Gamma_o_Hz": 92e6,
    "Gamma_e_Hz": 160e3,
    "kappa_e_Hz": 3e6,
    "delta_ec_Hz": -7.1e6,
    "finesse": 1.6,
    "crystal_length_m": 500e-6,
    "confinement_eta": 0.0027,
    "rho_m3": 4e24,
    "T1_optical_s": 267e-6,
    "T2_optical_s": 140e-9,
    "C_a": 0.22,
    "C_e": 2.3,
    "C_o": 0.14,
    "chi2_eff_pm_per_V": 2e7,
    "rho_ee": 0.39,
    "g_e_all_Hz": 2.42e6,
    "g_e_tot_Hz": 1.24e6,
    "g_e_tot_measured_Hz": 1.3e6,
    "eta_cw_peak": 1.1e-2,
    "eta_pulsed": 0.76e-2,
    "N_add_rti": 1.24,
    "manifold_fraction": 2.0 / 3.0,
}

# Reconstructed inputs. Each is back-solved from a quoted figure of merit:
#   mu_spin        g_e_all = 2pi x 2.42 MHz with omega_e = 2pi x 3.37 GHz
#   d_p = d_o      chi2_eff = 2e7 pm/V (linewidths entering in Hz)
#   alpha_peak     C_o = 0.14 with L = 500 um, F = 1.6, full optical overlap
#   Omega_pump     C_a = 0.22
#   g_o_tot        C_o = 0.14 after population weighting
#   kappa_o        FSR from the ~0.5 nm fringe period at 984.5 nm, over F
#   ext ratios     0.73 (microwave, second chip) and 0.95 (front-surface limited)
_OMEGA_E_HZ = 3.37e9
_KAPPA_O_HZ = 9.67e10
_MU_SPIN = 1.3026e-23
_DIPOLE = 4.056e-32
_RHO_EE = 0.39


def default_paper_params() -> tuple[SystemParams, MaterialParams]:
    """The headline device, with reconstructed values filled in."""
    material = MaterialParams(
        rho=4e24,
        d_p=_DIPOLE,
        d_o=_DIPOLE,
        mu_spin=_MU_SPIN,
        alpha_peak=0.14 * math.pi / (500e-6 * 1.6),
        crystal_length=500e-6,
        finesse=1.6,
        confinement_eta=0.0027,
        sound_velocity=4e3,
        T1_optical=267e-6,
        T2_optical=140e-9,
        optical_confinement=1.0,
    )
    manifold = 2.0 / 3.0
    n_e1 = _RHO_EE * manifold
    n_g = (1.0 - _RHO_EE) * manifold
    Gamma_o = TWO_PI * 92e6
    Gamma_e = TWO_PI * 160e3
    kappa_o = TWO_PI * _KAPPA_O_HZ
    kappa_e = TWO_PI * 3e6
    C_o_target = 0.14
    g_o = math.sqrt(C_o_target * Gamma_o * kappa_o / (4.0 * n_g))
    system = SystemParams(
        kappa_o_ext=0.95 * kappa_o,
        kappa_o_int=0.05 * kappa_o,
        kappa_e_ext=0.73 * kappa_e,
        kappa_e_int=0.27 * kappa_e,
        gamma_o=2.0 / material.T2_optical,
        gamma_s=Gamma_e,
        Gamma_o=Gamma_o,
        Gamma_e=Gamma_e,
        omega_e=TWO_PI * _OMEGA_E_HZ,
        g_o_tot=g_o,
        g_e_tot=TWO_PI * 2.42e6,
        Omega_pump=TWO_PI * 0.90e6,
        delta_oc=0.0,
        delta_ec=TWO_PI * -7.1e6,
        n_g=n_g,
        n_e1=n_e1,
        n_e2=0.0,
        manifold_fraction=manifold,
    )
    return system, material


# ---------------------------------------------------------------------------
# config files

# section -> {key: (target field, kind)}; kind "hz" is scaled by 2*pi on load
_SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "cavity_mw": {
        "omega_e_Hz": ("omega_e", "hz"),
        "kappa_e_ext_Hz": ("kappa_e_ext", "hz"),
        "kappa_e_int_Hz": ("kappa_e_int", "hz"),
        "kappa_e_Hz_total": ("kappa_e_total", "float"),
        "kappa_e_ext_ratio": ("kappa_e_ext_ratio", "float"),
        "delta_ec_Hz": ("delta_ec", "hz"),
    },
    "cavity_opt": {
        "kappa_o_ext_Hz": ("kappa_o_ext", "hz"),
        "kappa_o_int_Hz": ("kappa_o_int", "hz"),
        "kappa_o_Hz_total": ("kappa_o_total", "float"),
        "kappa_o_ext_ratio": ("kappa_o_ext_ratio", "float"),
        "delta_oc_Hz": ("delta_oc", "hz"),
    },
    "atoms": {
        "Gamma_o_Hz": ("Gamma_o", "hz"),
        "Gamma_e_Hz": ("Gamma_e", "hz"),
        "gamma_o_Hz": ("gamma_o", "hz"),
        "gamma_s_Hz": ("gamma_s", "hz"),
        "g_o_tot_Hz": ("g_o_tot", "hz"),
        "g_e_tot_Hz": ("g_e_tot", "hz"),
        "n_g": ("n_g", "float"),
        "n_e1": ("n_e1", "float"),
        "n_e2": ("n_e2", "float"),
        "manifold_fraction": ("manifold_fraction", "float"),
    },
    "pump": {
        "Omega_pump_Hz": ("Omega_pump", "hz"),
    },
    "material": {
        "rho_m3": ("rho", "float"),
        "d_p_Cm": ("d_p", "float"),
        "d_o_Cm": ("d_o", "float"),
        "mu_spin_JT": ("mu_spin", "float"),
        "alpha_peak_per_m": ("alpha_peak", "float"),
        "crystal_length_m": ("crystal_length", "float"),
        "finesse": ("finesse", "float"),
        "confinement_eta": ("confinement_eta", "float"),
        "optical_confinement": ("optical_confinement", "float"),
        "sound_velocity_m_s": ("sound_velocity", "float"),
        "T1_optical_s": ("T1_optical", "float"),
        "T2_optical_s": ("T2_optical", "float"),
    },
}

# Optional sections consumed by the ensemble, noise and harness layers. Keys
# are checked here so typos fail at load time; values pass through raw.
_EXTRA_SCHEMA: dict[str, dict[str, str]] = {
    "ensemble": {
        "sigma_opt_Hz": "hz",
        "sigma_spin_Hz": "hz",
        "beam_waist_m": "float",
        "mw_profile_r_m": "list",
        "mw_profile_g": "list",
        "n_groups": "int",
        "n_trials": "int",
        "seed": "int",
    },
    "noise": {
        "waveguide_temperature_K": "float",
        "resonator_temperature_K": "float",
        "spin_temperature_K": "float",
        "tau1_s": "float",
        "phonon_length_m": "float",
        "t_init_s": "float",
        "ion_volume_m3": "float",
        "rho_e": "float",
        "pl_lifetime_s": "float",
        "detection_eff": "float",
        "bandwidth_Hz": "float",
    },
    "sweep": {
        "pump_rabi_per_sqrt_mW_Hz": "hz",
    },
}

_REQUIRED_MATERIAL = ("rho", "d_p", "d_o", "mu_spin", "alpha_peak", "crystal_length",
                      "finesse", "confinement_eta", "sound_velocity", "T1_optical",
                      "T2_optical")


@dataclass(frozen=True)
class Config:
    system: SystemParams
    material: MaterialParams
    extras: dict[str, dict[str, Any]] = field(default_factory=dict)


def _number(section: str, key: str, value: Any, kind: str) -> Any:
    where = f"{section}.{key}"
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParameterError(where, f"expected an integer, got {value!r}")
        return value
    if kind == "list":
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ParameterError(where, "expected a list of numbers")
        return [float(v) for v in value]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParameterError(where, f"expected a number, got {value!r}")
    value = float(value)
    return TWO_PI * value if kind == "hz" else value


def parse_config(data: dict[str, Any]) -> Config:
    """Validate a parsed config mapping and build parameter objects."""
    for section in data:
        if section not in _SCHEMA and section not in _EXTRA_SCHEMA:
            raise ParameterError(section, "unknown section")
        if not isinstance(data[section], dict):
            raise ParameterError(section, "expected a table")

    values: dict[str, float] = {}
    for section, keys in _SCHEMA.items():
        for key, raw in data.get(section, {}).items():
            if key not in keys:
                raise ParameterError(f"{section}.{key}", "unknown key")
            target, kind = keys[key]
            values[target] = _number(section, key, raw, kind)

    for cav, sect in (("e", "cavity_mw"), ("o", "cavity_opt")):
        total = values.pop(f"kappa_{cav}_total", None)
        ratio = values.pop(f"kappa_{cav}_ext_ratio", None)
        split = (f"kappa_{cav}_ext" in values, f"kappa_{cav}_int" in values)
        if total is not None:
            if any(split):
                raise ParameterError(f"{sect}.kappa_{cav}_Hz_total",
                                     "give either the total with a ratio or ext/int, not both")
            if ratio is None:
                raise ParameterError(f"{sect}.kappa_{cav}_ext_ratio",
                                     "required with kappa_" + cav + "_Hz_total")
            if not 0.0 <= ratio <= 1.0:
                raise ParameterError(f"{sect}.kappa_{cav}_ext_ratio", "must lie in [0, 1]")
            # split in Hz first so each part is an exact 2*pi multiple on re-serialization
            values[f"kappa_{cav}_ext"] = TWO_PI * (total * ratio)
            values[f"kappa_{cav}_int"] = TWO_PI * (total * (1.0 - ratio))
        elif ratio is not None:
            raise ParameterError(f"{sect}.kappa_{cav}_ext_ratio",
                                 "only valid together with kappa_" + cav + "_Hz_total")

    material_fields = {f.name for f in dataclasses.fields(MaterialParams)}
    mat_kwargs = {k: v for k, v in values.items() if k in material_fields}
    for name in _REQUIRED_MATERIAL:
        if name not in mat_kwargs:
            raise ParameterError(f"material.{name}", "missing required field")
    material = MaterialParams(**mat_kwargs)

    sys_kwargs = {k: v for k, v in values.items() if k not in material_fields}
    # homogeneous defaults: optical dephasing from T2, spin from the spin linewidth
    sys_kwargs.setdefault("gamma_o", 2.0 / material.T2_optical)
    if "Gamma_e" in sys_kwargs:
        sys_kwargs.setdefault("gamma_s", sys_kwargs["Gamma_e"])
    for f in dataclasses.fields(SystemParams):
        if f.default is dataclasses.MISSING and f.name not in sys_kwargs:
            raise ParameterError(_field_location(f.name), "missing required field")
    system = SystemParams(**sys_kwargs)

    extras: dict[str, dict[str, Any]] = {}
    for section, keys in _EXTRA_SCHEMA.items():
        if section not in data:
            continue
        parsed = {}
        for key, raw in data[section].items():
            if key not in keys:
                raise ParameterError(f"{section}.{key}", "unknown key")
            parsed[key] = _number(section, key, raw, keys[key])
        extras[section] = parsed
    return Config(system, material, extras)


def _field_location(name: str) -> str:
    for section, keys in _SCHEMA.items():
        for key, (target, _) in keys.items():
            if target == name:
                return f"{section}.{key}"
    return name


def read_config(path: str | Path) -> Config:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ParameterError(str(path), "config file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParameterError(str(path), f"parse failure: {exc}") from None
    return parse_config(data)


def load_config(path: str | Path) -> tuple[SystemParams, MaterialParams]:
    """Load and validate a TOML config; returns (system, material)."""
    cfg = read_config(path)
    return cfg.system, cfg.material


def _to_hz(angular: float) -> float:
    """Hz value whose 2*pi multiple reproduces ``angular`` exactly when possible."""
    guess = angular / TWO_PI
    candidates = [guess]
    up = down = guess
    for _ in range(4):
        up = math.nextafter(up, math.inf)
        down = math.nextafter(down, -math.inf)
        candidates += [up, down]
    for c in candidates:
        if TWO_PI * c == angular:
            return c
    return guess


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def dump_config(system: SystemParams, material: MaterialParams,
                extras: dict[str, dict[str, Any]] | None = None) -> str:
    """Serialize parameters back to config text (ext/int split form)."""
    lines: list[str] = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (target, kind) in keys.items():
            if target.endswith(("_total", "_ratio")):
                continue
            source = material if hasattr(material, target) and section == "material" else system
            if not hasattr(source, target):
                continue
            value = getattr(source, target)
            if kind == "hz":
                value = _to_hz(value)
            lines.append(f"{key} = {_fmt(value)}")
        lines.append("")
    for section, body in (extras or {}).items():
        kinds = _EXTRA_SCHEMA.get(section)
        if kinds is None:
            raise ParameterError(section, "unknown section")
        lines.append(f"[{section}]")
        for key, value in body.items():
            if key not in kinds:
                raise ParameterError(f"{section}.{key}", "unknown key")
            if kinds[key] == "hz":
                value = _to_hz(value)
            lines.append(f"{key} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)


def save_config(path: str | Path, system: SystemParams, material: MaterialParams,
                extras: dict[str, dict[str, Any]] | None = None) -> None:
    Path(path).write_text(dump_config(system, material, extras))
