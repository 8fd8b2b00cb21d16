"""Finite-horizon entrepreneur problem by direct transcription.

The firm maximises

    sum_{t<T} beta^t [F(K_t, N_t, L_t, G_t) - w_t N_t - I_t - c(I_t)]
        + beta^(T-1) (mu_T K_T + theta_T L_T)

subject to the capital and location transitions, for a given public
investment path G_t.  The terminal shadow prices (mu_T, theta_T) value
the stocks left at the horizon; by default they are the follower
steady-state values, which makes the finite problem agree with the
infinite-horizon one when started at the steady state.

Unknowns are stacked per period t = 0..T-1 as

    [I_t, N_t, mu_t, theta_t, K_{t+1}, L_{t+1}]

and solved jointly with the four first-order conditions and the two
transition constraints by damped Newton.  The Jacobian is banded (each
block couples only to its neighbours), so it is built from central
differences with a three-colour grouping of the blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dynamics import immigration_step
from .exceptions import DomainError, InfeasibleError
from .model_core import ModelParams, _gradient, labor_aggregate
from .newton import damped_newton

_NVAR = 6


@dataclass(frozen=True)
class FocResiduals:
    """Per-period residuals; each array has length T."""

    I: np.ndarray
    K: np.ndarray
    L: np.ndarray
    N: np.ndarray
    capital: np.ndarray
    location: np.ndarray

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(getattr(self, k))) for k in ("I", "K", "L", "N", "capital", "location")))


@dataclass(frozen=True)
class OptimalPaths:
    """Stocks have length T+1, controls and prices length T."""

    K: np.ndarray
    L: np.ndarray
    U: np.ndarray
    I: np.ndarray
    N: np.ndarray
    w: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    G: np.ndarray
    s: np.ndarray
    objective: float
    iterations: int


def _s(G, params):
    f = params.forms
    return f.creation.value(G, params) - f.destruction.value(G, params)


def finite_horizon_objective(params, K0, L0, G_path, I, N, w, terminal):
    """Discounted profit of a control path, stocks rolled forward."""
    T = len(G_path)
    beta, p, phi, Q = params.beta, params.p, params.phi, params.Q
    s = _s(np.asarray(G_path, dtype=float), params)
    K, L, total = float(K0), float(L0), 0.0
    for t in range(T):
        F = (1.0 + params.chi * L * G_path[t] ** (1.0 / params.x)) * K**params.a * N[t] ** (1.0 - params.a)
        total += beta**t * (F - w[t] * N[t] - I[t] - float(params.forms.cost.value(I[t], params)))
        K, L = K + I[t] - p * L, L * (phi * s[t] + 1.0 - phi * L / Q)
    mu_T, theta_T = terminal
    return total + beta ** (T - 1) * (mu_T * K + theta_T * L)


class _System:
    def __init__(self, params, K0, L0, G, w, N_supply, terminal):
        self.params = params
        self.K0, self.L0 = K0, L0
        self.G = G
        self.s = _s(G, params)
        self.w = w
        self.N_supply = N_supply
        self.mu_T, self.theta_T = terminal
        self.T = len(G)

    def stocks(self, Z):
        K = np.concatenate(([self.K0], Z[:, 4]))
        L = np.concatenate(([self.L0], Z[:, 5]))
        return K, L

    def residual(self, z):
        P = self.params
        T = self.T
        Z = z.reshape(T, _NVAR)
        I, N, mu, theta = Z[:, 0], Z[:, 1], Z[:, 2], Z[:, 3]
        K, L = self.stocks(Z)
        F_K, F_N, F_L, _ = _gradient(K[:T], N, L[:T], self.G, P)
        R = np.empty((T, _NVAR))
        R[:, 0] = mu - 1.0 - P.forms.cost.marginal(I, P)
        if self.w is None:
            R[:, 1] = N - self.N_supply
        else:
            R[:, 1] = F_N - self.w
        R[:-1, 2] = P.beta * (F_K[1:] + mu[1:]) - mu[:-1]
        R[-1, 2] = self.mu_T - mu[-1]
        growth = 1.0 + P.phi * (self.s[1:] - 2.0 * L[1:T] / P.Q)
        R[:-1, 3] = P.beta * (F_L[1:] - P.p * mu[1:] + theta[1:] * growth) - theta[:-1]
        R[-1, 3] = self.theta_T - theta[-1]
        R[:, 4] = K[1:] - K[:-1] - I + P.p * L[:-1]
        R[:, 5] = L[1:] - L[:-1] * (P.phi * self.s + 1.0 - P.phi * L[:-1] / P.Q)
        return R.ravel()

    def jacobian(self, z):
        T = self.T
        n = T * _NVAR
        rows, cols, vals = [], [], []
        scale = 1e-6 * np.maximum(1.0, np.abs(z))
        for colour in range(3):
            blocks = np.arange(colour, T, 3)
            for k in range(_NVAR):
                idx = blocks * _NVAR + k
                zp, zm = z.copy(), z.copy()
                zp[idx] += scale[idx]
                zm[idx] -= scale[idx]
                diff = (self.residual(zp) - self.residual(zm)).reshape(T, _NVAR)
                for b, j in zip(blocks, idx):
                    lo, hi = max(b - 1, 0), min(b + 2, T)
                    d = diff[lo:hi].ravel() / (2.0 * scale[j])
                    nz = np.nonzero(d)[0]
                    rows.append(lo * _NVAR + nz)
                    cols.append(np.full(nz.size, j))
                    vals.append(d[nz])
        return sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )

    def admissible(self, z):
        Z = z.reshape(self.T, _NVAR)
        return bool(np.all(Z[:, 1] > 0.0) and np.all(Z[:, 4] > 0.0) and np.all(Z[:, 5] > 0.0))

    def foc_residuals(self, z):
        R = self.residual(z).reshape(self.T, _NVAR)
        return R


def _default_terminal(params):
    from .equilibrium import solve_follower

    ss = solve_follower(params)
    return ss.mu, ss.theta


def finite_horizon_optimize(
    params: ModelParams,
    K0: float,
    L0: float,
    U0: float,
    G_path,
    T: int,
    *,
    wages=None,
    terminal=None,
    tol: float = 1e-9,
):
    """Optimal (I_t, N_t) paths and their first-order residuals.

    ``G_path`` is a constant or a length-T sequence.  ``wages=None``
    solves for market-clearing wages: labour demand equals the supply
    g U_t + (1-g) u implied by the immigration recursion from ``U0``,
    and w_t = F_N.  Otherwise the firm takes the given wage path as
    fixed.  ``terminal`` is ``(mu_T, theta_T)``; by default the follower
    steady-state shadow prices under the default closure.

    Returns ``(OptimalPaths, FocResiduals)``.
    """
    if T < 2:
        raise DomainError(f"horizon T must be >= 2, got {T}")
    for name, value in (("K0", K0), ("L0", L0), ("U0", U0)):
        if not (np.isfinite(value) and value > 0.0):
            raise InfeasibleError(f"initial {name} must be > 0, got {value!r}")
    G = np.broadcast_to(np.asarray(G_path, dtype=float), (T,)).copy()
    if np.any(G < 0.0) or not np.all(np.isfinite(G)):
        raise DomainError("G path must be finite and >= 0")

    U = np.empty(T + 1)
    U[0] = U0
    for t in range(T):
        U[t + 1] = immigration_step(U[t], params)
    N_supply = labor_aggregate(U[:T], params)
    if terminal is None:
        terminal = _default_terminal(params)

    # Location does not respond to the firm's controls: roll it forward.
    s = _s(G, params)
    L = np.empty(T + 1)
    L[0] = L0
    for t in range(T):
        L[t + 1] = L[t] * (params.phi * s[t] + 1.0 - params.phi * L[t] / params.Q)
    if np.any(L <= 0.0):
        raise InfeasibleError("location path leaves the positive orthant under this G path")

    Z0 = np.empty((T, _NVAR))
    Z0[:, 0] = params.p * L[:T]
    Z0[:, 1] = N_supply
    Z0[:, 2] = 1.0 + params.forms.cost.marginal(Z0[:, 0], params)
    Z0[:, 3] = 0.0
    Z0[:, 4] = K0
    Z0[:, 5] = L[1:]

    eq = _System(params, K0, L0, G, None, N_supply, terminal)
    sol = damped_newton(eq.residual, Z0.ravel(), eq.jacobian, tol=tol, admissible=eq.admissible)
    z = sol.x
    iterations = sol.iterations
    Z = z.reshape(T, _NVAR)
    K, Lp = eq.stocks(Z)
    w = _gradient(K[:T], Z[:, 1], Lp[:T], G, params)[1] if wages is None else np.asarray(wages, float)

    system = _System(params, K0, L0, G, np.broadcast_to(w, (T,)).copy(), N_supply, terminal)
    if wages is not None:
        sol = damped_newton(system.residual, z, system.jacobian, tol=tol, admissible=system.admissible)
        z = sol.x
        iterations += sol.iterations
        Z = z.reshape(T, _NVAR)
        K, Lp = system.stocks(Z)

    R = system.foc_residuals(z)
    residuals = FocResiduals(
        I=R[:, 0], N=R[:, 1], K=R[:, 2], L=R[:, 3], capital=R[:, 4], location=R[:, 5]
    )
    I = Z[:, 0]
    if np.any(I < 0.0):
        raise InfeasibleError("optimal gross investment turns negative; the path needs disinvestment")
    paths = OptimalPaths(
        K=K, L=Lp, U=U, I=I.copy(), N=Z[:, 1].copy(), w=np.asarray(system.w).copy(),
        mu=Z[:, 2].copy(), theta=Z[:, 3].copy(), G=G, s=s,
        objective=finite_horizon_objective(params, K0, L0, G, I, Z[:, 1], system.w, terminal),
        iterations=iterations,
    )
    return paths, residuals
