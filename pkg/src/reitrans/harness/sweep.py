"""Parameter sweeps over a single variable in one of three evaluation modes."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from ..coop import cooperativities, efficiency_single_atom_exact
from ..ensemble import EnsembleSpec, mc_run, sample_ensemble
from ..params import ParameterError, SystemParams
from ..scattering import single_atom_reflection, solve
from .context import PUMP_RABI_PER_SQRT_MW

MODES = ("exact_matrix", "closed_form", "monte_carlo")
MODE_ALIASES = {"exact": "exact_matrix", "closed": "closed_form", "mc": "monte_carlo"}

# variables that are not SystemParams fields
PROBE = "probe"
PUMP_POWER = "pump_power_mW"
_SYSTEM_FIELDS = {f.name for f in dataclasses.fields(SystemParams)}


@dataclass(frozen=True)
class SweepSpec:
    """One-variable sweep.

    ``variable`` is ``probe`` (probe detuning, rad/s), ``pump_power_mW``
    (Omega = rabi_per_sqrt_mW * sqrt(P)) or any SystemParams field, optionally
    prefixed ``system.``. ``overrides`` may set SystemParams fields and ``probe``.
    """

    variable: str
    grid: tuple[float, ...]
    overrides: dict[str, float] = field(default_factory=dict)
    output: str | Path | None = None
    mode: str = "closed_form"
    ensemble: EnsembleSpec | None = None
    rabi_per_sqrt_mW: float = PUMP_RABI_PER_SQRT_MW

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        object.__setattr__(self, "mode", MODE_ALIASES.get(self.mode, self.mode))
        object.__setattr__(self, "variable", _resolve(self.variable))
        if not self.grid:
            raise ParameterError("grid", "sweep grid must be nonempty")
        if self.mode not in MODES:
            raise ParameterError("mode", f"unknown mode {self.mode!r}")
        for key in self.overrides:
            _resolve(key)
        if self.mode != "closed_form" and self.ensemble is None:
            raise ParameterError("ensemble", f"mode {self.mode} needs an ensemble spec")


def _resolve(name: str) -> str:
    key = name[len("system."):] if name.startswith("system.") else name
    if key in (PROBE, PUMP_POWER) or key in _SYSTEM_FIELDS:
        return key
    raise ParameterError(name, "unknown sweep variable")


def _apply(p: SystemParams, probe: float, key: str, value: float,
           rabi: float) -> tuple[SystemParams, float]:
    if key == PROBE:
        return p, value
    if key == PUMP_POWER:
        if value < 0:
            raise ParameterError(PUMP_POWER, "pump power must be >= 0")
        return p.replace(Omega_pump=rabi * math.sqrt(value)), probe
    return p.replace(**{key: value}), probe


def evaluate(p: SystemParams, probe: float, mode: str,
             ensemble: EnsembleSpec | None = None) -> dict[str, float]:
    """eta, refl and noise_ratio at one point."""
    mode = MODE_ALIASES.get(mode, mode)
    if mode == "closed_form":
        eta = efficiency_single_atom_exact(cooperativities(p, probe=probe), p)
        refl = abs(single_atom_reflection(p, probe)) ** 2
        ratio = p.kappa_e_int / p.kappa_e_ext if p.kappa_e_ext > 0 else math.nan
        return {"eta": eta, "refl": refl, "noise_ratio": ratio, "stderr": 0.0}
    if ensemble is None:
        raise ParameterError("ensemble", f"mode {mode} needs an ensemble spec")
    if mode == "exact_matrix":
        r = solve(sample_ensemble(ensemble, p, 0).groups, p, probe)
        return {"eta": r.eta_m2o, "refl": r.refl_mw, "noise_ratio": r.noise_ratio, "stderr": 0.0}
    if mode == "monte_carlo":
        r = mc_run(ensemble, p, probe)
        ratio = p.kappa_e_int / p.kappa_e_ext if p.kappa_e_ext > 0 else math.nan
        return {"eta": r.mean, "refl": r.refl_mean, "noise_ratio": ratio,
                "stderr": r.stderr if r.stderr is not None else math.nan}
    raise ParameterError("mode", f"unknown mode {mode!r}")


def _point(args) -> dict[str, Any]:
    spec, base, value = args
    p, probe = base, 0.0
    for k, v in spec.overrides.items():
        p, probe = _apply(p, probe, _resolve(k), float(v), spec.rabi_per_sqrt_mW)
    p, probe = _apply(p, probe, spec.variable, value, spec.rabi_per_sqrt_mW)
    row = {"value": value}
    row.update(evaluate(p, probe, spec.mode, spec.ensemble))
    return row


def sweep(spec: SweepSpec, base: SystemParams, workers: int = 1) -> list[dict[str, Any]]:
    """Rows (value, eta, refl, noise_ratio, stderr) in grid order; writes CSV if ``spec.output``."""
    tasks = [(spec, base, v) for v in spec.grid]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_point, tasks))
    else:
        rows = [_point(t) for t in tasks]
    if spec.output is not None:
        Path(spec.output).write_text(table_csv(rows))
    return rows


SWEEP_COLUMNS = ("value", "eta", "refl", "noise_ratio", "stderr")


def fmt(x: float) -> str:
    """Scientific notation with 12 significant digits."""
    return f"{x:.11e}"


def table_csv(rows: Sequence[dict[str, Any]], columns: Sequence[str] = SWEEP_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    return buf.getvalue()
