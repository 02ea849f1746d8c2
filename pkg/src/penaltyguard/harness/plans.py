"""Experiment plans: a base configuration, a grid of overrides and requested outputs."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..errors import ConfigError, OutputError
from ..model import ModelConfig, default_config
from ..propagate import PropagatorSettings

OUTPUTS = ("series", "t_prot", "longterm")
# grid entries may override any of these config fields
GRID_KEYS = {"e_penalty", "lambda", "seed", "initial_system_state", "n_env", "h_comp"}
_PLAN_FIELDS = {"name", "base_config", "grid", "time_grid", "outputs", "settings", "options"}

FIG1_PENALTIES = (0.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0)
FIG3_PENALTIES = tuple(float(e) for e in range(35, 226, 10))
FIG3_LAMBDAS = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0)


def log_grid(t_min: float, t_max: float, n: int) -> list[float]:
    return [float(x) for x in np.geomspace(t_min, t_max, n)]


def linear_grid(t_max: float, n: int) -> list[float]:
    return [float(x) for x in np.linspace(0.0, t_max, n)]


@dataclass(frozen=True)
class ExperimentPlan:
    """A named set of grid points sharing a base configuration and time grid.

    ``grid`` entries are config overrides (``e_penalty``, ``lambda``,
    ``seed``, ``initial_system_state``, ...).  ``options`` carries
    output-specific parameters such as ``averaging_times``, ``threshold`` and
    ``t_max``.
    """

    name: str
    base_config: Mapping[str, Any]
    grid: tuple[Mapping[str, Any], ...]
    time_grid: tuple[float, ...]
    outputs: tuple[str, ...] = ("series",)
    settings: Mapping[str, Any] = field(default_factory=dict)
    options: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(dict(g) for g in self.grid))
        object.__setattr__(self, "time_grid", tuple(float(t) for t in self.time_grid))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        self.validate()

    def validate(self):
        if not self.name:
            raise ConfigError("plan needs a name")
        if not self.grid:
            raise ConfigError(f"plan {self.name!r}: grid is empty")
        unknown = [o for o in self.outputs if o not in OUTPUTS]
        if unknown or not self.outputs:
            raise ConfigError(f"plan {self.name!r}: outputs must be drawn from {OUTPUTS}, got {self.outputs}")
        tg = np.asarray(self.time_grid)
        if tg.size == 0 or np.any(~np.isfinite(tg)) or np.any(tg < 0) or np.any(np.diff(tg) <= 0):
            raise ConfigError(f"plan {self.name!r}: time grid must be non-negative and strictly increasing")
        for i, g in enumerate(self.grid):
            bad = set(g) - GRID_KEYS
            if bad:
                raise ConfigError(f"plan {self.name!r}: grid[{i}] has unknown keys {sorted(bad)}")
        self.configs()
        PropagatorSettings(**self.settings)

    def configs(self) -> list[ModelConfig]:
        """Every grid point's validated configuration, in grid order."""
        out = []
        for i, g in enumerate(self.grid):
            d = copy.deepcopy(dict(self.base_config))
            d.update(copy.deepcopy(g))
            try:
                out.append(ModelConfig.from_dict(d))
            except ConfigError as exc:
                raise ConfigError(f"plan {self.name!r}: grid[{i}]: {exc}") from exc
        return out

    def propagator_settings(self) -> PropagatorSettings:
        return PropagatorSettings(**self.settings)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base_config": json.loads(json.dumps(self.base_config)),
            "grid": [json.loads(json.dumps(g)) for g in self.grid],
            "time_grid": list(self.time_grid),
            "outputs": list(self.outputs),
            "settings": dict(self.settings),
            "options": json.loads(json.dumps(self.options)),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentPlan":
        missing = {"name", "base_config", "grid", "time_grid"} - set(d)
        unknown = set(d) - _PLAN_FIELDS
        if missing or unknown:
            raise ConfigError(f"plan fields: missing {sorted(missing)}, unknown {sorted(unknown)}")
        return cls(d["name"], d["base_config"], tuple(d["grid"]), tuple(d["time_grid"]),
                   tuple(d.get("outputs", ("series",))), d.get("settings", {}), d.get("options", {}))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentPlan":
        """Same plan with every grid point's seed replaced."""
        base = dict(self.base_config, seed=int(seed))
        grid = tuple({k: v for k, v in g.items() if k != "seed"} for g in self.grid)
        # keep distinct grid points distinct when seeds were the only difference
        unique = []
        for g in grid:
            if g not in unique:
                unique.append(g)
        return ExperimentPlan(self.name, base, tuple(unique), self.time_grid, self.outputs,
                              self.settings, self.options)


def load_plan(path: str | Path) -> ExperimentPlan:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot read plan file {path}: {exc}") from exc
    try:
        return ExperimentPlan.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"plan file {path} is not valid JSON: {exc}") from exc


# --- named plans ----------------------------------------------------------

def _n(points: int, scale: float) -> int:
    return max(3, int(math.ceil(points * scale)))


def _subsample(values: Sequence, scale: float) -> list:
    if scale >= 1:
        return list(values)
    k = max(2, int(math.ceil(len(values) * scale)))
    idx = np.unique(np.round(np.linspace(0, len(values) - 1, k)).astype(int))
    return [values[i] for i in idx]


def _base(**overrides) -> dict:
    return default_config(**overrides).to_dict()


def _fidelity_plan(name, lam, t_max, state, scale, penalties=FIG1_PENALTIES, outputs=("series",)):
    return ExperimentPlan(
        name=name,
        base_config=_base(lam=lam, initial_system_state=state),
        grid=tuple({"e_penalty": ep} for ep in penalties),
        time_grid=tuple(log_grid(0.1, t_max, _n(61, scale))),
        outputs=outputs,
    )


RANDOM_STATE = {"kind": "random_codespace", "coeffs": None}
ZERO_STATE = {"kind": "zero_L", "coeffs": None}
PLUS_STATE = {"kind": "plus_L", "coeffs": None}


def fig1(scale: float = 1.0, full_scale: bool = False) -> ExperimentPlan:
    return _fidelity_plan("fig1", 0.1, 1e3, RANDOM_STATE, scale)


def fig2(scale: float = 1.0, full_scale: bool = False) -> ExperimentPlan:
    return _fidelity_plan("fig2", 0.01, 1e5, RANDOM_STATE, scale)


def fig3(scale: float = 1.0, full_scale: bool = False) -> ExperimentPlan:
    grid = [{"e_penalty": ep, "lambda": lam}
            for lam in _subsample(FIG3_LAMBDAS, scale)
            for ep in _subsample(FIG3_PENALTIES, scale)]
    return ExperimentPlan("fig3", _base(), tuple(grid), (1.0,), ("t_prot",),
                          options={"threshold": 0.9, "t_max": 1e13})


def fig4a(scale: float = 1.0, full_scale: bool = False) -> ExperimentPlan:
    return _fidelity_plan("fig4a", 0.1, 1e5, ZERO_STATE, scale)


def fig4b(scale: float = 1.0, full_scale: bool = False) -> ExperimentPlan:
    return _fidelity_plan("fig4b", 0.1, 1e5, PLUS_STATE, scale)


def fig5(scale: float = 1.0, full_scale: bool = False) -> ExperimentPlan:
    seeds = range(max(3, int(round(20 * scale))))
    unit = 1e8 if full_scale else 1e5
    return ExperimentPlan(
        "fig5",
        _base(e_penalty=128.0),
        tuple({"seed": s} for s in seeds),
        (1.0,),
        ("longterm",),
        options={"averaging_times": [k * unit for k in range(1, 11)]},
    )


def fig7(scale: float = 1.0, full_scale: bool = False) -> ExperimentPlan:
    grid = [{"e_penalty": ep, "initial_system_state": st}
            for st in (RANDOM_STATE, ZERO_STATE, PLUS_STATE) for ep in FIG1_PENALTIES]
    return ExperimentPlan("fig7", _base(), tuple(grid), tuple(log_grid(0.1, 1e3, _n(61, scale))))


def adiabatic_schedule(total_time: float) -> dict:
    return {"kind": "linear_interpolation",
            "endpoints": [[[1.0, "X"]], [[1.0, "Z"]]],
            "total_time": float(total_time)}


ADIABATIC_GROUND = {"kind": "logical_coeffs", "coeffs": [[2 ** -0.5, 0.0], [-(2 ** -0.5), 0.0]]}


def fig8(scale: float = 1.0, full_scale: bool = False) -> ExperimentPlan:
    total = 1e4 if full_scale else 1e3
    return ExperimentPlan(
        "fig8",
        _base(h_comp=adiabatic_schedule(total), initial_system_state=ADIABATIC_GROUND),
        tuple({"e_penalty": ep} for ep in FIG1_PENALTIES),
        tuple(linear_grid(total, _n(41, scale))),
        settings={"method": "stepped"},
    )


NAMED_PLANS = {f.__name__: f for f in (fig1, fig2, fig3, fig4a, fig4b, fig5, fig7, fig8)}


def named_plan(name: str, scale: float = 1.0, full_scale: bool = False) -> ExperimentPlan:
    if name not in NAMED_PLANS:
        raise ConfigError(f"unknown plan {name!r}; choose from {sorted(NAMED_PLANS)}")
    if not 0 < scale <= 1:
        raise ConfigError("scale must be in (0, 1]")
    return NAMED_PLANS[name](scale, full_scale)
