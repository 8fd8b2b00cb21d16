"""Scenario documents: model parameters plus run settings in one flat file."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace

from .equilibrium import DEFAULT_CLOSURE, DEFAULT_Q_TARGET, Closure
from .exceptions import ModelError
from .model_core import DEFAULT_CALIBRATION, PARAM_NAMES, ModelParams, parse_key_values

log = logging.getLogger(__name__)

REGIMES = ("follower", "leader", "both")
STABILITY_MAPS = ("sigmoid", "constant")
CONTROL_RULES = ("stationary", "optimal")


class ScenarioError(ModelError, ValueError):
    """Malformed scenario: unknown key, wrong type or missing required input."""


def _positive_or_none(name, value):
    if value is not None and not (math.isfinite(value) and value > 0.0):
        raise ScenarioError(f"{name}: requires a positive number, got {value!r}")


@dataclass(frozen=True)
class Scenario:
    """Everything one CLI run depends on.

    ``K0``, ``L0`` and ``U0`` left as None mean "the follower steady-state
    value" wherever a starting point is needed.
    """

    params: ModelParams = field(default_factory=ModelParams)
    regime: str = "follower"
    closure: str = DEFAULT_CLOSURE.value
    q_target: float = DEFAULT_Q_TARGET
    L_hat: float | None = None
    K0: float | None = None
    L0: float | None = None
    U0: float | None = None
    horizon: int = 200
    controls: str = "stationary"
    seed: int = 0
    out: str | None = None
    stability_map: str = "sigmoid"
    stability_L0: float = 1.0
    stability_L_max: float = 20.0
    rel_step: float = 1e-2
    econ_n: int = 500
    econ_noise_sd: float = 0.05
    econ_bootstrap: int = 200

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ScenarioError(f"regime: must be one of {', '.join(REGIMES)}, got {self.regime!r}")
        try:
            object.__setattr__(self, "closure", Closure.parse(self.closure).value)
        except ValueError as exc:
            raise ScenarioError(f"closure: {exc}") from None
        if self.controls not in CONTROL_RULES:
            raise ScenarioError(f"controls: must be one of {', '.join(CONTROL_RULES)}, got {self.controls!r}")
        if self.stability_map not in STABILITY_MAPS:
            raise ScenarioError(f"stability_map: must be one of {', '.join(STABILITY_MAPS)}")
        if not (math.isfinite(self.q_target) and self.q_target > 1.0):
            raise ScenarioError(f"q_target: requires q_target > 1, got {self.q_target!r}")
        for name in ("L_hat", "K0", "L0"):
            _positive_or_none(name, getattr(self, name))
        if self.U0 is not None and not (math.isfinite(self.U0) and self.U0 >= 0.0):
            raise ScenarioError(f"U0: requires U0 >= 0, got {self.U0!r}")
        if self.regime in ("leader", "both") and (self.L_hat is None or self.K0 is None):
            raise ScenarioError(f"regime {self.regime!r} requires leader inputs L_hat and K0")
        if self.horizon < 1:
            raise ScenarioError(f"horizon: requires horizon >= 1, got {self.horizon}")
        if self.seed < 0:
            raise ScenarioError(f"seed: requires seed >= 0, got {self.seed}")
        if not (0.0 < self.rel_step < 0.5):
            raise ScenarioError(f"rel_step: requires 0 < rel_step < 0.5, got {self.rel_step!r}")
        if self.econ_n < 100:
            raise ScenarioError(f"econ_n: requires econ_n >= 100, got {self.econ_n}")
        if self.econ_bootstrap < 2:
            raise ScenarioError(f"econ_bootstrap: requires econ_bootstrap >= 2, got {self.econ_bootstrap}")
        if not (math.isfinite(self.econ_noise_sd) and self.econ_noise_sd >= 0.0):
            raise ScenarioError(f"econ_noise_sd: requires econ_noise_sd >= 0, got {self.econ_noise_sd!r}")
        if not (self.stability_L0 >= 0.0 and self.stability_L_max > 0.0):
            raise ScenarioError("stability_L0 must be >= 0 and stability_L_max > 0")

    @property
    def closure_rule(self) -> Closure:
        return Closure(self.closure)

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def settings(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "params"}

    def to_dict(self) -> dict:
        return {**self.params.to_dict(), **self.settings()}

    def to_config(self) -> str:
        """Key-value text that :func:`parse_scenario` reads back to an equal Scenario."""
        lines = [f"{k} = {v!r}" for k, v in self.params.to_dict().items()]
        for k, v in self.settings().items():
            if v is None:
                continue
            lines.append(f"{k} = {v}" if isinstance(v, str) else f"{k} = {v!r}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        """sha256 of the canonical form; independent of key order and of ``out``."""
        doc = self.to_dict()
        doc.pop("out")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_SETTING_TYPES = {
    f.name: f.type for f in fields(Scenario) if f.name != "params"
}


def _convert(key, raw):
    kind = _SETTING_TYPES[key].replace(" | None", "")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ScenarioError(f"{key}: expected {kind}, got {raw!r}") from None
    return raw


def parse_scenario(text: str) -> Scenario:
    """Validated Scenario from a ``key = value`` document.

    Unknown keys, values of the wrong type and violated constraints raise
    errors naming the key.  Every default applied is logged.
    """
    try:
        raw = parse_key_values(text)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    unknown = sorted(set(raw) - set(PARAM_NAMES) - set(_SETTING_TYPES))
    if unknown:
        raise ScenarioError(f"unknown key(s): {', '.join(unknown)}")

    values = {}
    for name in PARAM_NAMES:
        if name in raw:
            try:
                values[name] = float(raw[name])
            except ValueError:
                raise ScenarioError(f"{name}: expected float, got {raw[name]!r}") from None
        else:
            log.info("parameter %s not given; using default %r", name, DEFAULT_CALIBRATION[name])
    params = ModelParams(**values)

    settings = {}
    defaults = Scenario.__dataclass_fields__
    for key in _SETTING_TYPES:
        if key in raw:
            settings[key] = _convert(key, raw[key])
        else:
            log.info("setting %s not given; using default %r", key, defaults[key].default)
    return Scenario(params=params, **settings)
