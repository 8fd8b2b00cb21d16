"""Steady states of the two policy regimes.

Follower regime
    The government supplies whatever G delivers the creative destruction
    the private sector demands, s* = L*/Q.  The steady state solves, for
    (K, L, G, mu),

        mu = 1 + c_I(p L)                 investment FOC with I = p L
        F_K(K, N, L, G) = r mu            capital Euler equation
        closure(K, L, G, mu) = 0          see below
        C(G) - D(G) = L / Q               accommodation

    with U, N, w, theta and B recovered afterwards.  The first-order
    conditions used throughout (see docs/derivation.md) are

        dI_t:      mu_t = 1 + c_I(I_t)
        dK_{t+1}:  mu_t = beta (F_K,t+1 + mu_{t+1})
        dL_{t+1}:  theta_t = beta (F_L,t+1 - p mu_{t+1}
                              + theta_{t+1} (1 + phi (s_{t+1} - 2 L_{t+1}/Q)))
        dN_t:      F_N,t = w_t

    The first three steady-state relations leave the system one equation
    short, so a closure rule is required.  Three are provided, all of
    them reconstructions:

    ``fixed-q``      Tobin's q settles at a benchmark q_target, so that
                     I* = I*(e, tau), L* = I*/p and G* = f(p, e, tau, Q).
                     Default.
    ``rent``         zero steady-state location rent, theta = 0, i.e.
                     F_L = p mu.
    ``public-good``  unit marginal product of the public good, F_G = 1.

Leader regime
    The government maximises s(G) on its own, location is frozen at an
    exogenous L_hat, I_hat = p L_hat and capital stays at its initial K0.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dynamics import immigration_steady_state
from .exceptions import ConvergenceError, DomainError, InfeasibleError
from .model_core import (
    NO_NET_CREATION,
    ModelParams,
    _gradient,
    business_creation,
    labor_aggregate,
)
from .newton import damped_newton

DEFAULT_Q_TARGET = 1.5


class Closure(str, enum.Enum):
    FIXED_Q = "fixed-q"
    RENT = "rent"
    PUBLIC_GOOD = "public-good"

    @classmethod
    def parse(cls, value) -> "Closure":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            names = ", ".join(c.value for c in cls)
            raise DomainError(f"unknown closure {value!r}; expected one of {names}") from None


DEFAULT_CLOSURE = Closure.FIXED_Q


def _s(G, params):
    f = params.forms
    return f.creation.value(G, params) - f.destruction.value(G, params)


def _ds(G, params):
    f = params.forms
    return f.creation.deriv(G, params) - f.destruction.deriv(G, params)


# ---------------------------------------------------------------------------
# Leader regime
# ---------------------------------------------------------------------------


def _leader_G_numeric(params: ModelParams) -> float:
    lo = 1e-12
    if _ds(lo, params) <= 0.0:
        raise InfeasibleError("s(G) is not increasing near G = 0; no interior maximiser")
    hi = 1.0
    for _ in range(200):
        if _ds(hi, params) < 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise InfeasibleError("s(G) has no interior maximiser below 2**200")
    return brentq(lambda G: _ds(G, params), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def leader_G(params: ModelParams) -> float:
    """G_hat maximising s(G), i.e. C'(G_hat) = D'(G_hat).

    Raises InfeasibleError unless s(G_hat) > 0.
    """
    if params.forms.has_closed_form_leader:
        G_hat = (params.c0 * params.gamma / params.d0) ** (1.0 / (1.0 - params.gamma))
    else:
        G_hat = _leader_G_numeric(params)
    if not _s(G_hat, params) > 0.0:
        raise InfeasibleError(f"maximal creative destruction s(G_hat)={_s(G_hat, params)!r} is not positive")
    return float(G_hat)


@dataclass(frozen=True)
class LeaderEquilibrium:
    G_hat: float
    s_hat: float
    L_hat: float
    K_hat: float
    I_hat: float
    U_hat: float
    B_hat: float

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps({"regime": "leader", **self.to_dict()}, indent=2, sort_keys=True) + "\n"


def solve_leader(params: ModelParams, L_hat: float, K0: float) -> LeaderEquilibrium:
    if not (math.isfinite(L_hat) and L_hat > 0.0):
        raise DomainError(f"L_hat must be > 0, got {L_hat!r}")
    if not (math.isfinite(K0) and K0 > 0.0):
        raise DomainError(f"K0 must be > 0, got {K0!r}")
    G_hat = leader_G(params)
    s_hat = float(_s(G_hat, params))
    return LeaderEquilibrium(
        G_hat=G_hat,
        s_hat=s_hat,
        L_hat=float(L_hat),
        K_hat=float(K0),
        I_hat=params.p * L_hat,
        U_hat=immigration_steady_state(params),
        B_hat=business_creation(s_hat, K0, L_hat, params),
    )


# ---------------------------------------------------------------------------
# Follower regime
# ---------------------------------------------------------------------------


def follower_G(s_star: float, params: ModelParams) -> float:
    """Smallest G with C(G) - D(G) = s_star (increasing branch)."""
    if not (math.isfinite(s_star) and s_star > 0.0):
        raise DomainError(f"demanded creative destruction must be > 0, got {s_star!r}")
    G_hat = leader_G(params)
    s_hat = float(_s(G_hat, params))
    if s_star > s_hat:
        raise InfeasibleError(f"s*={s_star!r} exceeds the maximal creative destruction {s_hat!r}")
    if s_star == s_hat:
        return G_hat
    if params.forms.has_closed_form_leader and params.gamma == 0.5:
        # c0*y - d0*y**2 = s with y = sqrt(G): smaller root, cancellation-free form
        disc = params.c0**2 - 4.0 * params.d0 * s_star
        y = 2.0 * s_star / (params.c0 + math.sqrt(max(disc, 0.0)))
        return y * y
    return brentq(lambda G: _s(G, params) - s_star, 0.0, G_hat, xtol=1e-300, rtol=4 * np.finfo(float).eps)


def accommodation_rule(params: ModelParams):
    """G_t = follower_G(L_t/Q): supply exactly the demanded s_t = L_t/Q."""

    def rule(t, state):
        return follower_G(state.L / params.Q, params)

    return rule


@dataclass(frozen=True)
class SteadyState:
    I: float
    K: float
    L: float
    G: float
    U: float
    N: float
    w: float
    s: float
    mu: float
    theta: float
    B: float
    residual_norm: float
    closure: str
    q_target: float | None = None
    iterations: int = 0
    residuals: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps({"regime": "follower", **self.to_dict()}, indent=2, sort_keys=True) + "\n"


def _unpack(y, params, s_hat):
    K, L, mu = math.exp(y[0]), math.exp(y[1]), math.exp(y[3])
    G = follower_G(min(math.exp(y[2]), s_hat), params)
    return K, L, G, mu


def _follower_system(params, closure, q_target, N, s_hat):
    cost = params.forms.cost
    p, r, Q = params.p, params.r, params.Q

    def residual(y):
        K, L, G, mu = _unpack(y, params, s_hat)
        F_K, _, F_L, F_G = _gradient(K, N, L, G, params)
        out = np.empty(4)
        out[0] = math.log(mu) - math.log1p(cost.marginal(p * L, params))
        out[1] = math.log(F_K) - math.log(r * mu)
        if closure is Closure.RENT:
            out[2] = math.log(F_L) - math.log(mu * p)
        elif closure is Closure.PUBLIC_GOOD:
            out[2] = math.log(F_G)
        else:
            out[2] = math.log(mu) - math.log(q_target)
        s = _s(G, params)
        out[3] = (math.log(s) if s > 0.0 else -math.inf) - math.log(L / Q)
        return out

    return residual


def _default_guess(params, N, G_hat):
    L = 0.25 * float(_s(G_hat, params)) * params.Q
    K, G, mu = _reduced_state(params, L, N)
    return K, L, G, mu


def _reduced_state(params, L, N):
    """(K, G, mu) solving every follower equation except the closure, given L."""
    G = follower_G(L / params.Q, params)
    mu = 1.0 + float(params.forms.cost.marginal(params.p * L, params))
    A = 1.0 + params.chi * L * G ** (1.0 / params.x)
    K = (params.a * A * N ** (1.0 - params.a) / (params.r * mu)) ** (1.0 / (1.0 - params.a))
    return K, G, mu


def public_good_scan(params: ModelParams, n: int = 400):
    """log F_G - 0 along the admissible branch, as (L grid, values).

    Every other follower equation is solved exactly at each L, so a
    root of the returned values is a public-good steady state.
    """
    U = immigration_steady_state(params)
    N = float(labor_aggregate(U, params))
    s_hat = float(_s(leader_G(params), params))
    Ls = params.Q * s_hat * np.logspace(-8, 0, n)
    vals = []
    for L in Ls:
        K, G, _ = _reduced_state(params, L, N)
        vals.append(math.log(_gradient(K, N, L, G, params)[3]))
    return Ls, np.array(vals)


def solve_follower(
    params: ModelParams,
    closure=DEFAULT_CLOSURE,
    initial_guess=None,
    *,
    q_target: float = DEFAULT_Q_TARGET,
    tol: float = 1e-10,
) -> SteadyState:
    """Follower steady state by damped Newton in log coordinates.

    ``initial_guess`` is ``(K, L, G, mu)``.  Positivity of K, L, mu is
    built into the log parametrisation.  G is carried through log s(G)
    on the increasing branch (0, G_hat]; iterates with s above s_hat are
    rejected like any other inadmissible step.  A guess G beyond G_hat
    is replaced by its increasing-branch twin with the same s(G), and
    starting values of s are clipped to 0.9 s_hat, away from the branch
    tip where dG/ds is unbounded.
    """
    closure = Closure.parse(closure)
    if closure is Closure.FIXED_Q and not q_target > 1.0:
        raise DomainError(f"q_target must exceed 1, got {q_target!r}")
    U = immigration_steady_state(params)
    N = float(labor_aggregate(U, params))
    if N <= 0.0:
        raise InfeasibleError("steady-state labour aggregate is zero")
    G_hat = leader_G(params)
    if closure is Closure.FIXED_Q:
        # mu = q pins c_I(p L) = q - 1; c_I increasing, so check the largest admissible L
        L_max = params.Q * float(_s(G_hat, params))
        if float(params.forms.cost.marginal(params.p * L_max, params)) < q_target - 1.0:
            raise InfeasibleError(
                f"q_target={q_target!r} needs L above the accommodation limit Q*s_hat={L_max!r}"
            )
    if closure is Closure.PUBLIC_GOOD:
        Ls, vals = public_good_scan(params)
        crossing = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
        if crossing.size == 0:
            raise InfeasibleError(
                "public-good closure has no steady state: F_G - 1 keeps one sign on the "
                f"admissible branch (F_G ranges over [{math.exp(vals.min())!r}, {math.exp(vals.max())!r}])"
            )
        if initial_guess is None:
            L0 = float(Ls[crossing[0]])
            K0, G0, mu0 = _reduced_state(params, L0, N)
            initial_guess = (K0, L0, G0, mu0)

    K0, L0, G0, mu0 = initial_guess if initial_guess is not None else _default_guess(params, N, G_hat)
    if min(K0, L0, G0, mu0) <= 0.0:
        raise DomainError(f"initial guess must be positive, got {(K0, L0, G0, mu0)!r}")
    s_hat = float(_s(G_hat, params))
    s0 = float(_s(G0, params))
    if not s0 > 0.0:
        s0 = 0.5 * s_hat
    s0 = min(s0, 0.9 * s_hat)
    y0 = np.array([math.log(K0), math.log(L0), math.log(s0), math.log(mu0)])
    log_s_hat = math.log(s_hat)

    def admissible(y):
        return bool(np.all(np.abs(y) < 700) and y[2] <= log_s_hat)

    def project(trial, current):
        if trial[2] > log_s_hat:
            trial = trial.copy()
            trial[2] = 0.5 * (current[2] + log_s_hat)
        return trial

    fun = _follower_system(params, closure, q_target, N, s_hat)
    try:
        result = damped_newton(
            fun, y0, tol=tol, max_step=5.0, admissible=admissible, project=project
        )
    except ConvergenceError as exc:
        exc.diagnostics["closure"] = closure.value
        raise

    K, L, G, mu = _unpack(result.x, params, s_hat)
    return _assemble(params, closure, q_target, K, L, G, mu, U, N, result)


def _assemble(params, closure, q_target, K, L, G, mu, U, N, result):
    p, r, Q, phi = params.p, params.r, params.Q, params.phi
    I = p * L
    s = L / Q
    F_K, F_N, F_L, _ = _gradient(K, N, L, G, params)
    w = float(F_N)
    theta = float((F_L - mu * p) / (r + phi * L / Q))
    B = business_creation(s, K, L, params)
    if B is NO_NET_CREATION:
        raise InfeasibleError("follower steady state has no net creative destruction")
    solver = dict(zip(("investment_foc", "euler", "closure", "accommodation"), map(float, result.residual)))
    residuals = {
        **solver,
        "capital_transition": I - p * L,
        "location_transition": phi * L * (s - L / Q),
        "immigration": U - immigration_steady_state(params),
        "labor": N - float(labor_aggregate(U, params)),
        "wage": w - float(F_N),
        "costate": theta * (r + phi * L / Q) - (float(F_L) - mu * p),
    }
    return SteadyState(
        I=I, K=K, L=L, G=G, U=U, N=N, w=w, s=s, mu=mu, theta=theta, B=B,
        residual_norm=max(abs(v) for v in residuals.values()),
        closure=closure.value,
        q_target=q_target if closure is Closure.FIXED_Q else None,
        iterations=result.iterations,
        residuals=residuals,
    )


def steady_state_foc_residuals(params: ModelParams, ss: SteadyState) -> dict:
    """Time-indexed FOCs evaluated on constant paths at ``ss``."""
    beta, p, phi, Q = params.beta, params.p, params.phi, params.Q
    F_K, F_N, F_L, _ = _gradient(ss.K, ss.N, ss.L, ss.G, params)
    c_I = float(params.forms.cost.marginal(ss.I, params))
    s_next = float(_s(ss.G, params))
    return {
        "I": ss.mu - 1.0 - c_I,
        "K": beta * (F_K + ss.mu) - ss.mu,
        "L": beta * (F_L - p * ss.mu + ss.theta * (1.0 + phi * (s_next - 2.0 * ss.L / Q))) - ss.theta,
        "N": float(F_N) - ss.w,
        "capital_transition": ss.I - p * ss.L,
        "location_transition": phi * ss.L * (s_next - ss.L / Q),
    }


# ---------------------------------------------------------------------------
# Regime comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegimeComparison:
    B_hat: float
    B_star: float
    ratio: float
    larger: str
    leader: LeaderEquilibrium
    follower: SteadyState

    def to_json(self) -> str:
        doc = {
            "B_hat": self.B_hat,
            "B_star": self.B_star,
            "ratio": self.ratio,
            "larger": self.larger,
            "leader": self.leader.to_dict(),
            "follower": self.follower.to_dict(),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def compare_regimes(
    params: ModelParams,
    L_hat: float,
    K0: float,
    closure=DEFAULT_CLOSURE,
    *,
    q_target: float = DEFAULT_Q_TARGET,
    follower: SteadyState | None = None,
) -> RegimeComparison:
    """B(s_hat, K_hat, L_hat) against B(s*, K*, L*).

    Which is larger is a computed fact about the given inputs, not a
    general result.
    """
    leader = solve_leader(params, L_hat, K0)
    if follower is None:
        follower = solve_follower(params, closure, q_target=q_target)
    ratio = leader.B_hat / follower.B
    if leader.B_hat > follower.B:
        larger = "leader"
    elif leader.B_hat < follower.B:
        larger = "follower"
    else:
        larger = "equal"
    return RegimeComparison(leader.B_hat, follower.B, ratio, larger, leader, follower)
