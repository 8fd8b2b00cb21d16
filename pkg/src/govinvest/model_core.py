"""Model primitives: parameters, functional forms and their derivatives.

Everything here is a pure function of its arguments.  The public
operations validate their inputs and raise :class:`DomainError`; the
functional-form classes underneath are raw vectorised math so that
solvers can evaluate them on trial iterates without repeated checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Protocol

import numpy as np

from .exceptions import DomainError, ParameterError

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Functional forms
# ---------------------------------------------------------------------------


class CreationForm(Protocol):
    def value(self, G, params): ...
    def deriv(self, G, params): ...


class DestructionForm(Protocol):
    def value(self, G, params): ...
    def deriv(self, G, params): ...


class PowerCreation:
    """C(G) = c0 * G**gamma."""

    def value(self, G, params):
        return params.c0 * np.power(G, params.gamma)

    def deriv(self, G, params):
        return params.c0 * params.gamma * np.power(G, params.gamma - 1.0)


class LinearDestruction:
    """D(G) = d0 * G."""

    def value(self, G, params):
        return params.d0 * np.asarray(G, dtype=float)

    def deriv(self, G, params):
        return params.d0 * np.ones_like(np.asarray(G, dtype=float))


class CobbDouglasBusiness:
    """B(s, K, L) = B0 * s**b_s * K**b_K * L**b_L."""

    def value(self, s, K, L, params):
        return (
            params.B0
            * np.power(s, params.b_s)
            * np.power(K, params.b_K)
            * np.power(L, params.b_L)
        )


class QuadraticAdjustmentCost:
    """c(I) = (kappa/2) * W * I**2 with a tax/fine loading W.

    ``loading="additive"`` uses W = 1 + tau + e, a cost that depends on
    (e, tau, I) only.  ``loading="sector"`` weights the two charges by
    the sector shares, W = 1 + alpha_f*tau + alpha_i*e.
    """

    def __init__(self, loading: str = "additive"):
        if loading not in ("additive", "sector"):
            raise ValueError(f"unknown cost loading {loading!r}")
        self.loading = loading

    def weight(self, params) -> float:
        if self.loading == "sector":
            return 1.0 + params.alpha_f * params.tau + params.alpha_i * params.e
        return 1.0 + params.tau + params.e

    def value(self, I, params):
        return 0.5 * params.kappa * self.weight(params) * np.square(I)

    def marginal(self, I, params):
        return params.kappa * self.weight(params) * np.asarray(I, dtype=float)

    def second(self, I, params):
        return params.kappa * self.weight(params) * np.ones_like(np.asarray(I, dtype=float))

    def __repr__(self):
        return f"QuadraticAdjustmentCost(loading={self.loading!r})"


@dataclass(frozen=True)
class FunctionalForms:
    """The four abstract functions of the model, swappable as a unit."""

    creation: CreationForm = field(default_factory=PowerCreation)
    destruction: DestructionForm = field(default_factory=LinearDestruction)
    business: CobbDouglasBusiness = field(default_factory=CobbDouglasBusiness)
    cost: QuadraticAdjustmentCost = field(default_factory=QuadraticAdjustmentCost)

    @property
    def has_closed_form_leader(self) -> bool:
        return isinstance(self.creation, PowerCreation) and isinstance(
            self.destruction, LinearDestruction
        )


DEFAULT_FORMS = FunctionalForms()


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

# Invented demonstration calibration; nothing here is estimated from data.
DEFAULT_CALIBRATION = {
    "a": 0.33,
    "p": 1.0,
    "v": 0.6,
    "x": 2.0,
    "chi": 0.1,
    "z": 0.5,
    "e": 0.1,
    "tau": 0.2,
    "alpha_i": 0.2,
    "phi": 0.5,
    "Q": 10.0,
    "M": 100.0,
    "r": 0.04,
    "g": 0.3,
    "u": 50.0,
    "kappa": 0.1,
    "c0": 2.0,
    "gamma": 0.5,
    "d0": 0.5,
    "B0": 1.0,
    "b_s": 1.0 / 3.0,
    "b_K": 1.0 / 3.0,
    "b_L": 1.0 / 3.0,
}


@dataclass(frozen=True)
class ModelParams:
    """Exogenous parameters of the model.

    ``alpha_f`` and ``beta`` are derived accessors and never stored.
    Construction validates every range constraint and raises
    :class:`ParameterError` naming the offending field.
    """

    a: float = DEFAULT_CALIBRATION["a"]
    p: float = DEFAULT_CALIBRATION["p"]
    v: float = DEFAULT_CALIBRATION["v"]
    x: float = DEFAULT_CALIBRATION["x"]
    chi: float = DEFAULT_CALIBRATION["chi"]
    z: float = DEFAULT_CALIBRATION["z"]
    e: float = DEFAULT_CALIBRATION["e"]
    tau: float = DEFAULT_CALIBRATION["tau"]
    alpha_i: float = DEFAULT_CALIBRATION["alpha_i"]
    phi: float = DEFAULT_CALIBRATION["phi"]
    Q: float = DEFAULT_CALIBRATION["Q"]
    M: float = DEFAULT_CALIBRATION["M"]
    r: float = DEFAULT_CALIBRATION["r"]
    g: float = DEFAULT_CALIBRATION["g"]
    u: float = DEFAULT_CALIBRATION["u"]
    kappa: float = DEFAULT_CALIBRATION["kappa"]
    c0: float = DEFAULT_CALIBRATION["c0"]
    gamma: float = DEFAULT_CALIBRATION["gamma"]
    d0: float = DEFAULT_CALIBRATION["d0"]
    B0: float = DEFAULT_CALIBRATION["B0"]
    b_s: float = DEFAULT_CALIBRATION["b_s"]
    b_K: float = DEFAULT_CALIBRATION["b_K"]
    b_L: float = DEFAULT_CALIBRATION["b_L"]
    forms: FunctionalForms = field(default=DEFAULT_FORMS, compare=False, repr=False)

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParameterError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        for name, check, text in _CONSTRAINTS:
            if not check(self):
                raise ParameterError(f"{name}: requires {text} (got {getattr(self, name)!r})")

    @property
    def alpha_f(self) -> float:
        return 1.0 - self.alpha_i

    @property
    def beta(self) -> float:
        return 1.0 / (1.0 + self.r)

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def to_config(self) -> str:
        """Flat ``key = value`` text, one field per line."""
        return "".join(f"{name} = {getattr(self, name)!r}\n" for name in PARAM_NAMES)

    @classmethod
    def from_mapping(cls, values, *, forms: FunctionalForms = DEFAULT_FORMS) -> "ModelParams":
        """Build from a mapping; unknown keys are an error, missing keys default."""
        unknown = sorted(set(values) - set(PARAM_NAMES))
        if unknown:
            raise ParameterError(f"unknown parameter key(s): {', '.join(unknown)}")
        for name in PARAM_NAMES:
            if name not in values:
                log.info("parameter %s not given; using default %r", name, DEFAULT_CALIBRATION[name])
        return cls(**dict(values), forms=forms)

    @classmethod
    def from_config(cls, text: str, **kwargs) -> "ModelParams":
        return cls.from_mapping(parse_key_values(text, float), **kwargs)


_CONSTRAINTS = [
    ("a", lambda P: 0.0 < P.a < 1.0, "0 < a < 1"),
    ("p", lambda P: P.p > 0.0, "p > 0"),
    ("alpha_i", lambda P: 0.0 <= P.alpha_i < 0.5, "0 <= alpha_i < 0.5 (alpha_f > 0.5)"),
    ("v", lambda P: P.alpha_i < P.v < 1.0, "alpha_i < v < 1 (v > alpha_i)"),
    ("x", lambda P: P.x > 1.0, "x > 1"),
    ("chi", lambda P: P.chi > 0.0, "chi > 0"),
    ("z", lambda P: P.z >= 0.0, "z >= 0"),
    ("e", lambda P: P.e >= 0.0, "e >= 0"),
    ("tau", lambda P: P.tau >= 0.0, "tau >= 0"),
    ("phi", lambda P: P.phi >= 0.0, "phi >= 0"),
    ("Q", lambda P: P.Q > 0.0, "Q > 0"),
    ("M", lambda P: P.M >= 0.0, "M >= 0"),
    ("r", lambda P: P.r > 0.0, "r > 0"),
    ("g", lambda P: 0.0 <= P.g <= 1.0, "0 <= g <= 1"),
    ("u", lambda P: P.u >= 0.0, "u >= 0"),
    ("kappa", lambda P: P.kappa > 0.0, "kappa > 0"),
    ("c0", lambda P: P.c0 > 0.0, "c0 > 0"),
    ("gamma", lambda P: 0.0 < P.gamma < 1.0, "0 < gamma < 1"),
    ("d0", lambda P: P.d0 > 0.0, "d0 > 0"),
    ("B0", lambda P: P.B0 > 0.0, "B0 > 0"),
    ("b_s", lambda P: P.b_s > 0.0, "b_s > 0"),
    ("b_K", lambda P: P.b_K > 0.0, "b_K > 0"),
    ("b_L", lambda P: P.b_L > 0.0, "b_L > 0"),
]

PARAM_NAMES = tuple(f.name for f in fields(ModelParams) if f.name != "forms")


def parse_key_values(text: str, convert=str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParameterError(f"line {lineno}: empty key")
        if key in out:
            raise ParameterError(f"line {lineno}: duplicate key {key!r}")
        try:
            out[key] = convert(value)
        except ValueError as exc:
            raise ParameterError(f"{key}: cannot parse {value!r} ({exc})") from None
    return out


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EconomyState:
    K: float
    L: float
    U: float
    t: int = 0

    def __post_init__(self):
        for name in ("K", "L", "U"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0.0:
                raise DomainError(f"state {name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, name, value)
        if self.t < 0:
            raise DomainError(f"time index must be >= 0, got {self.t}")


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def _check(name, value, *, positive=False):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {value!r}")
    if positive and np.any(arr <= 0.0):
        raise DomainError(f"{name} must be > 0, got {value!r}")
    if np.any(arr < 0.0):
        raise DomainError(f"{name} must be >= 0, got {value!r}")
    return value


def productivity(L, G, params: ModelParams):
    """A(L, G) = 1 + chi * L * G**(1/x)."""
    return 1.0 + params.chi * L * np.power(G, 1.0 / params.x)


def production(K, N, L, G, params: ModelParams):
    """Aggregate output A(L, G) * K**a * N**(1-a)."""
    for name, value in (("K", K), ("N", N), ("L", L), ("G", G)):
        _check(name, value)
    return productivity(L, G, params) * np.power(K, params.a) * np.power(N, 1.0 - params.a)


def production_gradient(K, N, L, G, params: ModelParams):
    """Closed-form (F_K, F_N, F_L, F_G).

    F_G is infinite at G = 0 when L > 0, since x > 1.
    """
    _check("K", K, positive=True)
    _check("N", N, positive=True)
    _check("L", L)
    _check("G", G)
    return _gradient(K, N, L, G, params)


def _gradient(K, N, L, G, params):
    a, chi, x = params.a, params.chi, params.x
    base = np.power(K, a) * np.power(N, 1.0 - a)
    A = 1.0 + chi * L * np.power(G, 1.0 / x)
    F_K = a * A * base / K
    F_N = (1.0 - a) * A * base / N
    F_L = chi * np.power(G, 1.0 / x) * base
    with np.errstate(divide="ignore", invalid="ignore"):
        F_G = np.where(
            np.asarray(L) == 0.0, 0.0, chi * L / x * np.power(G, 1.0 / x - 1.0) * base
        )
    if np.ndim(F_G) == 0:
        F_G = float(F_G)
    return F_K, F_N, F_L, F_G


def production_hessian_KNL(K, N, L, G, params: ModelParams):
    """Second derivatives in (K, N, L) as a dict keyed ``"KK"``, ``"KN"``..."""
    a, chi, x = params.a, params.chi, params.x
    base = np.power(K, a) * np.power(N, 1.0 - a)
    A = 1.0 + chi * L * np.power(G, 1.0 / x)
    gx = chi * np.power(G, 1.0 / x)
    return {
        "KK": a * (a - 1.0) * A * base / K**2,
        "KN": a * (1.0 - a) * A * base / (K * N),
        "KL": a * gx * base / K,
        "NN": -a * (1.0 - a) * A * base / N**2,
        "NL": (1.0 - a) * gx * base / N,
        "LL": 0.0 * base,
    }


def creative_destruction(G, params: ModelParams):
    """Net creation s = C(G) - D(G)."""
    _check("G", G)
    forms = params.forms
    return forms.creation.value(G, params) - forms.destruction.value(G, params)


def creative_destruction_deriv(G, params: ModelParams):
    _check("G", G, positive=True)
    forms = params.forms
    return forms.creation.deriv(G, params) - forms.destruction.deriv(G, params)


def adjustment_cost(I, params: ModelParams):
    """Adjustment cost c(e, tau, I); gross investment must be >= 0."""
    _check("I", I)
    return params.forms.cost.value(I, params)


def marginal_adjustment_cost(I, params: ModelParams):
    _check("I", I)
    return params.forms.cost.marginal(I, params)


class _NoNetCreation:
    """Sentinel returned by :func:`business_creation` when s <= 0."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NO_NET_CREATION"

    def __bool__(self):
        return False


NO_NET_CREATION = _NoNetCreation()


def business_creation(s, K, L, params: ModelParams):
    """B(s, K, L), or ``NO_NET_CREATION`` when s <= 0."""
    if not math.isfinite(s):
        raise DomainError(f"s must be finite, got {s!r}")
    _check("K", K)
    _check("L", L)
    if s <= 0.0:
        return NO_NET_CREATION
    return float(params.forms.business.value(s, K, L, params))


def labor_aggregate(U, params: ModelParams):
    """N = g*U + (1-g)*u."""
    _check("U", U)
    return params.g * U + (1.0 - params.g) * params.u
