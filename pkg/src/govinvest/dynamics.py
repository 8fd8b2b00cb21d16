"""State transitions for location, capital and immigration, plus simulation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .exceptions import DomainError, InfeasibleError, SimulationError
from .model_core import (
    NO_NET_CREATION,
    EconomyState,
    ModelParams,
    _gradient,
    business_creation,
    creative_destruction,
    labor_aggregate,
)

TRAJECTORY_COLUMNS = ("t", "K", "L", "U", "I", "N", "w", "s", "G", "B")


def location_step(L: float, s: float, params: ModelParams) -> float:
    """L_next = L * (phi*s + 1 - phi*L/Q).

    Raises InfeasibleError when the step overshoots past zero; the value
    is never clamped.
    """
    if not math.isfinite(L) or L < 0.0:
        raise DomainError(f"L must be finite and >= 0, got {L!r}")
    if L == 0.0:
        return 0.0
    L_next = L * (params.phi * s + 1.0 - params.phi * L / params.Q)
    if L_next < 0.0:
        raise InfeasibleError(f"degenerate location step: L={L!r} maps to {L_next!r} < 0")
    return L_next


def location_map_derivative(L: float, s: float, params: ModelParams) -> float:
    """d L_next / d L for constant s."""
    return 1.0 + params.phi * s - 2.0 * params.phi * L / params.Q


def capital_step(K: float, I: float, L: float, params: ModelParams) -> float:
    """K_next = K + I - p*L; a negative result is infeasible."""
    for name, value in (("K", K), ("I", I), ("L", L)):
        if not math.isfinite(value) or value < 0.0:
            raise DomainError(f"{name} must be finite and >= 0, got {value!r}")
    K_next = K + I - params.p * L
    if K_next < 0.0:
        raise InfeasibleError(f"infeasible capital path: K_next={K_next!r} < 0")
    return K_next


def immigration_step(U: float, params: ModelParams) -> float:
    """U_next = U + z*alpha_f*M - (v - alpha_i)*U."""
    if not math.isfinite(U) or U < 0.0:
        raise DomainError(f"U must be finite and >= 0, got {U!r}")
    return U + params.z * params.alpha_f * params.M - (params.v - params.alpha_i) * U


def immigration_steady_state(params: ModelParams) -> float:
    return params.z * params.alpha_f * params.M / (params.v - params.alpha_i)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

GPolicy = Union[float, Callable[[int, EconomyState], float]]
Controls = Union[Sequence, Callable[[int, EconomyState], tuple]]


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed states and flows, t = 0..T.

    Arrays all have length T+1.  The last row carries no investment
    control, so ``I[T]`` is NaN.  ``B`` is NaN wherever s <= 0.
    """

    t: np.ndarray
    K: np.ndarray
    L: np.ndarray
    U: np.ndarray
    I: np.ndarray
    N: np.ndarray
    w: np.ndarray
    s: np.ndarray
    G: np.ndarray
    B: np.ndarray

    def __len__(self):
        return len(self.t)

    def state(self, t: int) -> EconomyState:
        return EconomyState(K=self.K[t], L=self.L[t], U=self.U[t], t=int(self.t[t]))

    @property
    def states(self):
        return [self.state(i) for i in range(len(self))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for i in range(len(self)):
            row = [int(self.t[i])]
            row += [repr(float(getattr(self, col)[i])) for col in TRAJECTORY_COLUMNS[1:]]
            writer.writerow(row)
        return buf.getvalue()


def _resolve_G(G_policy, t, state):
    if callable(G_policy):
        return float(G_policy(t, state))
    return float(G_policy)


def _resolve_control(controls, t, state):
    if callable(controls):
        I, N = controls(t, state)
    else:
        I, N = controls[t]
    return float(I), (None if N is None else float(N))


def simulate(
    params: ModelParams,
    initial: EconomyState,
    controls: Controls,
    G_policy: GPolicy,
    T: int,
) -> Trajectory:
    """Iterate the location, capital and immigration maps for T periods.

    ``controls`` is either a length-T sequence of ``(I, N)`` pairs or a
    callable ``(t, state) -> (I, N)``.  ``N=None`` means the labour
    aggregate implied by the current immigrant stock.  ``G_policy`` is a
    constant or a callable ``(t, state) -> G``.
    """
    if T < 1:
        raise DomainError(f"horizon T must be >= 1, got {T}")
    if not callable(controls) and len(controls) != T:
        raise DomainError(f"control path has length {len(controls)}, expected {T}")

    cols = {name: np.full(T + 1, np.nan) for name in TRAJECTORY_COLUMNS}
    cols["t"] = np.arange(initial.t, initial.t + T + 1)
    K, L, U = initial.K, initial.L, initial.U

    for k in range(T + 1):
        t = initial.t + k
        state = EconomyState(K=K, L=L, U=U, t=t)
        try:
            G = _resolve_G(G_policy, k, state)
            s = float(creative_destruction(G, params))
            if k < T:
                I, N = _resolve_control(controls, k, state)
            else:
                I, N = math.nan, None
            if N is None:
                N = float(labor_aggregate(U, params))
            w = float(_gradient(K, N, L, G, params)[1]) if K > 0.0 and N > 0.0 else math.nan
            B = business_creation(s, K, L, params)
            for name, value in zip(
                ("K", "L", "U", "I", "N", "w", "s", "G", "B"),
                (K, L, U, I, N, w, s, G, math.nan if B is NO_NET_CREATION else B),
            ):
                cols[name][k] = value
            if k < T:
                K, L, U = (
                    capital_step(K, I, L, params),
                    location_step(L, s, params),
                    immigration_step(U, params),
                )
        except (DomainError, InfeasibleError) as exc:
            raise SimulationError(t, exc) from exc

    return Trajectory(**cols)


def stationary_capital_controls(params: ModelParams):
    """Control rule I_t = p*L_t (capital held constant), market labour."""

    def rule(t, state):
        return params.p * state.L, None

    return rule


# ---------------------------------------------------------------------------
# Location map with constant or state-dependent creative destruction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocationMapConfig:
    """The one-dimensional location map L -> L (phi s(L) + 1 - phi L / Q).

    ``s_source`` is either a number (constant creative destruction) or a
    callable ``s(L)`` giving endogenous feedback from location to s.
    """

    phi: float
    Q: float
    s_source: Union[float, Callable[[float], float]]

    def __post_init__(self):
        if not (math.isfinite(self.phi) and self.phi >= 0.0):
            raise DomainError(f"phi must be >= 0, got {self.phi!r}")
        if not (math.isfinite(self.Q) and self.Q > 0.0):
            raise DomainError(f"Q must be > 0, got {self.Q!r}")
        if not callable(self.s_source) and not math.isfinite(self.s_source):
            raise DomainError("constant s must be finite")

    @classmethod
    def from_params(cls, params: ModelParams, s_source) -> "LocationMapConfig":
        return cls(phi=params.phi, Q=params.Q, s_source=s_source)

    @property
    def constant_s(self) -> bool:
        return not callable(self.s_source)

    def s(self, L: float) -> float:
        if callable(self.s_source):
            value = float(self.s_source(L))
            if not math.isfinite(value):
                raise DomainError(f"s(L) is not finite at L={L!r}")
            return value
        return float(self.s_source)

    def __call__(self, L: float) -> float:
        """One step of the map; same error contract as :func:`location_step`."""
        if not math.isfinite(L) or L < 0.0:
            raise DomainError(f"L must be finite and >= 0, got {L!r}")
        if L == 0.0:
            return 0.0
        L_next = L * (self.phi * self.s(L) + 1.0 - self.phi * L / self.Q)
        if L_next < 0.0:
            raise InfeasibleError(f"degenerate location step: L={L!r} maps to {L_next!r} < 0")
        return L_next

    def gap(self, L: float) -> float:
        """s(L) - L/Q: same sign as map(L) - L for L > 0 and phi > 0."""
        return self.s(L) - L / self.Q


def sigmoid_s(L: float, low: float = 0.1, high: float = 1.0, center: float = 5.0, slope: float = 1.0) -> float:
    """Logistic creative-destruction schedule rising from ``low`` to ``high``."""
    return low + (high - low) / (1.0 + math.exp(-slope * (L - center)))


def sigmoid_three_equilibria_config() -> LocationMapConfig:
    """S-shaped s(L) on Q = 10, phi = 0.5: three positive fixed points.

    A stand-in for a state-dependent creative-destruction schedule; the
    outer fixed points are stable, the middle one is unstable.
    """
    return LocationMapConfig(phi=0.5, Q=10.0, s_source=sigmoid_s)
