"""Run configuration: one canonical JSON document.

Example (every field shown; only ``state.family``, ``params.omega``,
``params.mu``, ``grid.t_max`` and ``grid.n_steps`` are required)::

    {
      "mode": "diffusive",
      "state": {"family": "squeezed_coherent", "alpha_re": 1.0, "alpha_im": 0.0,
                "rho": 0.5, "theta": 0.785398},
      "params": {"omega": 1.0, "mu": 0.5, "dim": "auto"},
      "grid": {"t_max": 4.0, "n_steps": 4000},
      "seed": 0,
      "n_trajectories": 1000,
      "observation": "diffusive",
      "measure": "physical",
      "scheme": "exponential",
      "record_stride": 1,
      "output": "out",
      "tolerances": {"mean_x": 0.01, "mean_y": 0.01, "mean_n": 0.01, "dx": 0.01, "dy": 0.01}
    }

Unknown keys anywhere are rejected. Errors are :class:`ConfigError` with
``field`` set to the dotted key path.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from . import states
from .errors import ConfigError
from .fock import ModelParams
from .noise import TimeGrid
from .sde import MEASURES, OBSERVABLES, SCHEMES

MODES = ("diffusive", "counting", "analytic", "compare", "ensemble", "survival", "lindblad")
FAMILIES = ("vacuum", "coherent", "cat_even", "cat_odd", "squeezed_vacuum", "squeezed_coherent")
OBSERVATIONS = ("diffusive", "counting")
SQUEEZED = ("squeezed_vacuum", "squeezed_coherent")
DEFAULT_TOLERANCE = 1e-2
DEFAULT_OUTPUT = "out"


@dataclass(frozen=True)
class StateConfig:
    family: str
    alpha_re: float = 0.0
    alpha_im: float = 0.0
    rho: float | None = None
    theta: float | None = None

    @property
    def alpha(self) -> complex:
        return complex(self.alpha_re, self.alpha_im)

    def build(self) -> states.InitialState:
        a = self.alpha
        if self.family == "vacuum":
            return states.Vacuum()
        if self.family == "coherent":
            return states.Coherent(a)
        if self.family == "cat_even":
            return states.CatEven(a)
        if self.family == "cat_odd":
            return states.CatOdd(a)
        sq = states.SqueezeParams(self.rho, self.theta)
        if self.family == "squeezed_vacuum":
            return states.SqueezedVacuum(sq)
        return states.SqueezedCoherent(sq, a)


@dataclass(frozen=True)
class ParamsConfig:
    omega: float
    mu: float
    dim: int | str = "auto"


@dataclass(frozen=True)
class GridConfig:
    t_max: float
    n_steps: int

    def build(self) -> TimeGrid:
        return TimeGrid(self.t_max, self.n_steps)


@dataclass(frozen=True)
class RunConfig:
    state: StateConfig
    params: ParamsConfig
    grid: GridConfig
    mode: str = "diffusive"
    seed: int = 0
    n_trajectories: int = 1000
    observation: str = "diffusive"
    measure: str = "physical"
    scheme: str = "exponential"
    record_stride: int = 1
    output: str = DEFAULT_OUTPUT
    tolerances: dict = field(default_factory=lambda: {k: DEFAULT_TOLERANCE for k in OBSERVABLES})

    def initial_state(self) -> states.InitialState:
        return self.state.build()

    def resolved_dim(self) -> int:
        """Fock dimension after applying the auto-sizing rule."""
        if self.params.dim == "auto":
            return states.auto_dim(self.initial_state())
        return int(self.params.dim)

    def model(self) -> ModelParams:
        return ModelParams(self.params.omega, self.params.mu, self.resolved_dim())

    def time_grid(self) -> TimeGrid:
        return self.grid.build()

    def with_overrides(self, **changes) -> "RunConfig":
        data = asdict(self)
        data.update(changes)
        return config_from_dict(data)


# -- validation helpers --------------------------------------------------------


def _reject_unknown(d: dict, allowed, prefix: str):
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key {prefix}{key!r}", field=f"{prefix}{key}")


def _require(d: dict, key: str, prefix: str):
    if key not in d:
        raise ConfigError(f"missing required key '{prefix}{key}'", field=f"{prefix}{key}")
    return d[key]


def _number(value, name: str, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}", field=name)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite", field=name)
    if positive and value <= 0:
        raise ConfigError(f"{name} must be positive", field=name)
    if nonneg and value < 0:
        raise ConfigError(f"{name} must be non-negative", field=name)
    return value


def _integer(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}", field=name)
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}", field=name)
    return value


def _choice(value, name: str, options) -> str:
    if value not in options:
        raise ConfigError(f"{name} must be one of {list(options)}, got {value!r}", field=name)
    return value


def _section(data: dict, key: str) -> dict:
    sec = _require(data, key, "")
    if not isinstance(sec, dict):
        raise ConfigError(f"'{key}' must be an object", field=key)
    return sec


def _state(d: dict) -> StateConfig:
    _reject_unknown(d, ("family", "alpha_re", "alpha_im", "rho", "theta"), "state.")
    family = _choice(_require(d, "family", "state."), "state.family", FAMILIES)
    a_re = _number(d.get("alpha_re", 0.0), "state.alpha_re")
    a_im = _number(d.get("alpha_im", 0.0), "state.alpha_im")
    rho, theta = d.get("rho", None), d.get("theta", None)
    if family in SQUEEZED:
        if rho is None:
            raise ConfigError("squeezed state needs 'rho'", field="state.rho")
        if theta is None:
            raise ConfigError("'rho' given without 'theta'", field="state.theta")
        rho = _number(rho, "state.rho", nonneg=True)
        theta = _number(theta, "state.theta")
    elif rho is not None or theta is not None:
        if rho is not None and theta is None:
            raise ConfigError("'rho' given without 'theta'", field="state.theta")
        raise ConfigError(f"family {family!r} takes no squeeze parameters", field="state.rho")
    if family == "vacuum" and (a_re or a_im):
        raise ConfigError("vacuum takes no amplitude", field="state.alpha_re")
    if family in ("cat_even", "cat_odd") and a_re == 0 and a_im == 0:
        raise ConfigError("cat state needs a non-zero amplitude", field="state.alpha_re")
    if family == "squeezed_vacuum" and (a_re or a_im):
        raise ConfigError("squeezed_vacuum takes no amplitude; use squeezed_coherent", field="state.alpha_re")
    return StateConfig(family, a_re, a_im, rho, theta)


def _params(d: dict) -> ParamsConfig:
    _reject_unknown(d, ("omega", "mu", "dim"), "params.")
    omega = _number(_require(d, "omega", "params."), "params.omega")
    mu = _number(_require(d, "mu", "params."), "params.mu", nonneg=True)
    dim = d.get("dim", "auto")
    if dim != "auto":
        dim = _integer(dim, "params.dim", 2)
    return ParamsConfig(omega, mu, dim)


def _grid(d: dict) -> GridConfig:
    _reject_unknown(d, ("t_max", "n_steps"), "grid.")
    t_max = _number(_require(d, "t_max", "grid."), "grid.t_max", positive=True)
    n_steps = _integer(_require(d, "n_steps", "grid."), "grid.n_steps", 1)
    return GridConfig(t_max, n_steps)


def _tolerances(d) -> dict:
    if not isinstance(d, dict):
        raise ConfigError("'tolerances' must be an object", field="tolerances")
    _reject_unknown(d, OBSERVABLES, "tolerances.")
    tol = {k: DEFAULT_TOLERANCE for k in OBSERVABLES}
    for k, v in d.items():
        tol[k] = _number(v, f"tolerances.{k}", positive=True)
    return tol


TOP_KEYS = (
    "mode",
    "state",
    "params",
    "grid",
    "seed",
    "n_trajectories",
    "observation",
    "measure",
    "scheme",
    "record_stride",
    "output",
    "tolerances",
)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    _reject_unknown(data, TOP_KEYS, "")
    output = data.get("output", DEFAULT_OUTPUT)
    if not isinstance(output, str) or not output:
        raise ConfigError("output must be a non-empty path string", field="output")
    cfg = RunConfig(
        state=_state(_section(data, "state")),
        params=_params(_section(data, "params")),
        grid=_grid(_section(data, "grid")),
        mode=_choice(data.get("mode", "diffusive"), "mode", MODES),
        seed=_integer(data.get("seed", 0), "seed", 0),
        n_trajectories=_integer(data.get("n_trajectories", 1000), "n_trajectories", 1),
        observation=_choice(data.get("observation", "diffusive"), "observation", OBSERVATIONS),
        measure=_choice(data.get("measure", "physical"), "measure", MEASURES),
        scheme=_choice(data.get("scheme", "exponential"), "scheme", SCHEMES),
        record_stride=_integer(data.get("record_stride", 1), "record_stride", 1),
        output=output,
        tolerances=_tolerances(data.get("tolerances", {})),
    )
    if cfg.seed >= 2**64:
        raise ConfigError("seed must fit in 64 bits", field="seed")
    if cfg.record_stride > cfg.grid.n_steps:
        raise ConfigError("record_stride exceeds grid.n_steps", field="record_stride")
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON configuration document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    if d["state"]["rho"] is None:
        del d["state"]["rho"]
        del d["state"]["theta"]
    return d


def emit_config(cfg: RunConfig) -> str:
    """Canonical text: every field present, keys sorted, two-space indent."""
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"
