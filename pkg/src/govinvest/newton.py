"""Damped Newton iteration for small (or sparse) nonlinear systems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConvergenceError


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: np.ndarray
    residual_norm: float
    iterations: int
    history: list = field(default_factory=list)


def fd_jacobian(fun, x, f0=None, rel_step=1e-7):
    """Central-difference Jacobian, one column at a time."""
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = []
    for j in range(n):
        h = rel_step * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        cols.append((np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * h))
    return np.column_stack(cols)


def _solve(J, rhs):
    if sp.issparse(J):
        return spla.spsolve(sp.csc_matrix(J), rhs)
    return np.linalg.solve(J, rhs)


def damped_newton(
    fun,
    x0,
    jac=None,
    *,
    tol=1e-10,
    max_iter=200,
    max_halvings=50,
    admissible=None,
    max_step=None,
    project=None,
    polish=2,
):
    """Solve ``fun(x) = 0`` by Newton steps with step halving.

    A trial step is accepted only if the iterate is admissible, the
    residual is finite, and its inf-norm does not increase; otherwise
    the step is halved, at most ``max_halvings`` times.  ``max_step``
    caps the inf-norm of a full step before any halving.  ``project``,
    if given, maps ``(trial, current)`` to a corrected trial point before
    the admissibility test (used to keep bounded coordinates inside
    their bounds instead of shrinking the whole step).  Convergence is
    declared when the inf-norm falls below ``tol``; ``polish`` extra
    full steps are then attempted and kept only if they do not worsen
    the residual.

    Raises ConvergenceError carrying the last iterate and residuals.
    """
    x = np.asarray(x0, dtype=float).copy()
    jac = jac or (lambda z: fd_jacobian(fun, z))
    admissible = admissible or (lambda z: True)

    f = np.asarray(fun(x), dtype=float)
    norm = np.max(np.abs(f)) if f.size else 0.0
    history = [norm]

    def diag(reason, it):
        return {"reason": reason, "x": x.tolist(), "residual": f.tolist(),
                "residual_norm": float(norm), "iterations": it}

    if not np.isfinite(norm):
        raise ConvergenceError("residual not finite at the initial guess", diag("initial", 0))

    it = 0
    while norm >= tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"no convergence after {max_iter} iterations (|F|={norm:.3e})",
                diag("max_iter", it),
            )
        it += 1
        try:
            step = _solve(jac(x), -f)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            raise ConvergenceError(f"singular Jacobian: {exc}", diag("singular", it)) from exc
        if not np.all(np.isfinite(step)):
            raise ConvergenceError("non-finite Newton step", diag("singular", it))
        lam = 1.0
        if max_step is not None:
            lam = min(1.0, max_step / max(np.max(np.abs(step)), 1e-300))
        for _ in range(max_halvings + 1):
            trial = x + lam * step
            if project is not None:
                trial = project(trial, x)
            if admissible(trial):
                f_trial = np.asarray(fun(trial), dtype=float)
                n_trial = np.max(np.abs(f_trial))
                if np.isfinite(n_trial) and n_trial <= norm:
                    break
            lam *= 0.5
        else:
            raise ConvergenceError(
                f"line search failed after {max_halvings} halvings (|F|={norm:.3e})",
                diag("line_search", it),
            )
        x, f, norm = trial, f_trial, n_trial
        history.append(norm)

    for _ in range(polish):
        try:
            trial = x + _solve(jac(x), -f)
        except (np.linalg.LinAlgError, RuntimeError):
            break
        if not admissible(trial):
            break
        f_trial = np.asarray(fun(trial), dtype=float)
        n_trial = np.max(np.abs(f_trial))
        if not (np.isfinite(n_trial) and n_trial <= norm):
            break
        x, f, norm = trial, f_trial, n_trial

    return NewtonResult(x=x, residual=f, residual_norm=float(norm), iterations=it, history=history)
