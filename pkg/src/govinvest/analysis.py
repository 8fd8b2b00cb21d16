"""Fixed points of the location map, cobweb series and comparative statics."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .dynamics import LocationMapConfig
from .equilibrium import DEFAULT_CLOSURE, DEFAULT_Q_TARGET, Closure, solve_follower
from .exceptions import DomainError, InfeasibleError, ModelError
from .model_core import ModelParams

log = logging.getLogger(__name__)

STABLE, UNSTABLE, NONHYPERBOLIC = "stable", "unstable", "nonhyperbolic"
HYPERBOLIC_BAND = 1e-6


# ---------------------------------------------------------------------------
# Fixed points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPoint:
    L_star: float
    map_derivative: float
    classification: str

    def to_dict(self):
        return {"L_star": self.L_star, "map_derivative": self.map_derivative,
                "classification": self.classification}


def map_derivative(L: float, config: LocationMapConfig) -> float:
    """dL_next/dL; analytic for constant s, central difference otherwise."""
    if config.constant_s:
        return 1.0 + config.phi * config.s(L) - 2.0 * config.phi * L / config.Q
    h = 1e-6 * max(1.0, abs(L))
    lo = max(L - h, 0.0)
    return (config(L + h) - config(lo)) / (L + h - lo)


def classify_stability(L_star: float, config: LocationMapConfig) -> FixedPoint:
    """Classify a fixed point by the magnitude of the map derivative."""
    d = map_derivative(L_star, config)
    if abs(abs(d) - 1.0) <= HYPERBOLIC_BAND:
        label = NONHYPERBOLIC
    elif abs(d) < 1.0:
        label = STABLE
    else:
        label = UNSTABLE
    return FixedPoint(L_star=float(L_star), map_derivative=float(d), classification=label)


def find_fixed_points(config: LocationMapConfig, L_max: float, n_brackets: int = 1000) -> list:
    """All fixed points of the location map on ``[0, L_max]``, ascending.

    L = 0 is always a fixed point and is reported first.  Positive fixed
    points are the roots of s(L) - L/Q: sign changes on an even grid of
    ``n_brackets`` cells are refined by bisection, and grid-local minima
    of the gap that touch zero without crossing are reported as
    nonhyperbolic candidates.
    """
    if not (math.isfinite(L_max) and L_max > 0.0):
        raise DomainError(f"L_max must be > 0, got {L_max!r}")
    if n_brackets < 100:
        raise DomainError(f"n_brackets must be >= 100, got {n_brackets}")
    if config.phi == 0.0:
        raise DomainError("phi = 0 makes every L a fixed point; there is nothing to bracket")

    points = [classify_stability(0.0, config)]
    grid = np.linspace(0.0, L_max, n_brackets + 1)
    gap = np.array([config.gap(L) for L in grid])
    roots = []
    for i in range(1, n_brackets + 1):
        lo, hi = grid[i - 1], grid[i]
        g_lo, g_hi = gap[i - 1], gap[i]
        if g_hi == 0.0:
            roots.append((hi, False))
        elif g_lo * g_hi < 0.0 and lo > 0.0 or (lo == 0.0 and g_lo * g_hi < 0.0):
            lo = max(lo, 1e-300)
            roots.append((brentq(config.gap, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps), False))
    # tangencies: an interior grid extremum of the gap that does not cross
    for i in range(1, n_brackets):
        a, b, c = abs(gap[i - 1]), abs(gap[i]), abs(gap[i + 1])
        same_sign = gap[i - 1] * gap[i] > 0.0 and gap[i] * gap[i + 1] > 0.0
        if same_sign and b <= a and b <= c:
            res = minimize_scalar(lambda L: abs(config.gap(L)), bounds=(grid[i - 1], grid[i + 1]),
                                  method="bounded", options={"xatol": 1e-13})
            if abs(config.gap(res.x)) < 1e-10:
                roots.append((float(res.x), True))

    for L, tangent in sorted(roots):
        if L <= 0.0 or any(abs(L - p.L_star) < 1e-9 for p in points):
            continue
        fp = classify_stability(L, config)
        if tangent:
            fp = FixedPoint(fp.L_star, fp.map_derivative, NONHYPERBOLIC)
        points.append(fp)
    return points


def forward_iteration_check(point: FixedPoint, config: LocationMapConfig,
                            eps: float = 1e-3, steps: int = 20) -> bool:
    """Does iterating from L* +/- eps behave as the classification says?

    Stable points must pull both perturbations closer, unstable points
    must push at least one further away.  At L* = 0 only the upward
    perturbation is admissible.
    """
    starts = [point.L_star + eps] + ([point.L_star - eps] if point.L_star - eps > 0.0 else [])
    shrink = []
    for L in starts:
        try:
            for _ in range(steps):
                L = config(L)
        except InfeasibleError:
            shrink.append(False)
            continue
        shrink.append(abs(L - point.L_star) < eps)
    if point.classification == STABLE:
        return all(shrink)
    if point.classification == UNSTABLE:
        return not all(shrink)
    return True


# ---------------------------------------------------------------------------
# Cobweb
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CobwebSeries:
    L_t: np.ndarray
    L_next: np.ndarray
    curve_L: np.ndarray
    curve_map: np.ndarray
    converged: bool
    diverged: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["L_t", "L_next", "curve_L", "curve_map"])
        n = max(len(self.L_t), len(self.curve_L))

        def cell(arr, i):
            return repr(float(arr[i])) if i < len(arr) else ""

        for i in range(n):
            w.writerow([cell(self.L_t, i), cell(self.L_next, i), cell(self.curve_L, i), cell(self.curve_map, i)])
        return buf.getvalue()


def cobweb(config: LocationMapConfig, L0: float, T: int, *, L_max: float | None = None,
           n_curve: int = 201) -> CobwebSeries:
    """Iterate the map T times from ``L0`` and sample the map curve.

    The series is truncated, with ``diverged`` set, if an iterate leaves
    ``[0, L_max]`` or the map overshoots past zero.  ``L_max`` defaults
    to ``max(2 Q, 2 L0)``.
    """
    if not (math.isfinite(L0) and L0 >= 0.0):
        raise DomainError(f"L0 must be >= 0, got {L0!r}")
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    L_max = max(2.0 * config.Q, 2.0 * L0) if L_max is None else float(L_max)

    xs, ys = [], []
    L, diverged = float(L0), False
    for _ in range(T):
        try:
            nxt = config(L)
        except InfeasibleError:
            diverged = True
            break
        if not math.isfinite(nxt) or nxt > L_max:
            diverged = True
            break
        xs.append(L)
        ys.append(nxt)
        L = nxt
    converged = not diverged and len(ys) >= 1 and abs(ys[-1] - xs[-1]) < 1e-10

    curve_L = np.linspace(0.0, L_max, n_curve)
    curve_map = np.empty(n_curve)
    for i, Lc in enumerate(curve_L):
        # the raw polynomial, so the plotted curve may dip below zero
        curve_map[i] = Lc * (config.phi * config.s(Lc) + 1.0 - config.phi * Lc / config.Q)
    return CobwebSeries(np.array(xs), np.array(ys), curve_L, curve_map, converged, diverged)


# ---------------------------------------------------------------------------
# Comparative statics
# ---------------------------------------------------------------------------

SIGN_ROWS = ("I", "L", "s", "U", "G", "N", "K", "w", "theta", "B")
SIGN_COLUMNS = ("a", "p", "v", "x", "z", "e", "tau", "alpha_i", "alpha_f", "phi", "Q", "M", "r", "g")
PLUS, MINUS, ZERO, AMBIGUOUS = "+", "-", "0", "±"
ZERO_BAND = 1e-9

# Published sign pattern of the follower steady state, stored verbatim.
# The source labels the expected fine "E" and the last column "G"; they
# are read as e and g (the immigrant labour share) respectively.
_REFERENCE_TEXT = """\
\ta\tp\tv\tx\tz\tE\tτ\tα_i\tα_f\tφ\tQ\tM\tr\tG
I\t0\t0\t0\t0\t0\t-\t-\t0\t0\t0\t0\t0\t0\t0
L\t0\t-\t0\t0\t0\t-\t-\t0\t0\t0\t0\t0\t0\t0
s\t0\t-\t0\t0\t0\t-\t-\t0\t0\t0\t-\t0\t0\t0
U\t0\t-\t-\t0\t+\t-\t-\t+\t-\t0\t0\t+\t0\t0
G\t0\t-\t0\t0\t0\t-\t-\t0\t0\t0\t-\t0\t0\t0
N\t0\t-\t-\t0\t+\t-\t-\t+\t-\t0\t0\t+\t0\t+/-
K\t+\t-\t-\t+/-\t+\t-\t-\t+\t-\t0\t-\t+\t-\t+/-
w\t+\t+/-\t+/-\t+/-\t+/-\t+/-\t+/-\t+/-\t+/-\t0\t-\t+/-\t-\t+/-
ϑ\t+\t-\t-\t+/-\t+\t-\t-\t+\t-\t+\t+/-\t+\t-\t+/-
B\t+\t-\t-\t+/-\t+\t-\t-\t+\t-\t0\t-\t+\t-\t+/-
"""

_COLUMN_ALIASES = {"E": "e", "τ": "tau", "α_i": "alpha_i", "α_f": "alpha_f", "φ": "phi", "G": "g"}
_ROW_ALIASES = {"ϑ": "theta"}


def _parse_reference(text):
    lines = text.strip("\n").split("\n")
    cols = [_COLUMN_ALIASES.get(c, c) for c in lines[0].split("\t")[1:]]
    table = {}
    for line in lines[1:]:
        name, *cells = line.split("\t")
        row = _ROW_ALIASES.get(name, name)
        for col, cell in zip(cols, cells):
            table[(row, col)] = AMBIGUOUS if cell == "+/-" else cell
    return table


REFERENCE_SIGNS = _parse_reference(_REFERENCE_TEXT)

MATCH, MISMATCH, REFERENCE_AMBIGUOUS, UNEVALUABLE = "match", "mismatch", "reference-ambiguous", "unevaluable"


def _sign(delta, level):
    if not math.isfinite(delta):
        return None
    if abs(delta) < ZERO_BAND * max(abs(level), 1e-300) or delta == 0.0:
        return ZERO
    return PLUS if delta > 0.0 else MINUS


def classify_cell(up: float, down: float, level: float) -> str:
    """Sign from the forward (``up``) and backward (``down``) differences.

    Both are oriented as y(+) - y(0) and y(0) - y(-).  Agreement gives the
    common sign (or 0 when both are inside the zero band); otherwise ±.
    """
    a, b = _sign(up, level), _sign(down, level)
    if a is None or b is None:
        return AMBIGUOUS
    return a if a == b else AMBIGUOUS


@dataclass
class SignTable:
    """Classified signs, rows x columns, plus the raw differences."""

    cells: dict
    rel_step: float
    closure: str
    up: dict = field(default_factory=dict)
    down: dict = field(default_factory=dict)
    unevaluable: dict = field(default_factory=dict)

    def cell(self, row, col) -> str:
        return self.cells[(row, col)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", *SIGN_COLUMNS])
        for row in SIGN_ROWS:
            w.writerow([row, *(self.cells[(row, c)] for c in SIGN_COLUMNS)])
        return buf.getvalue()

    def diff(self, reference: dict = REFERENCE_SIGNS) -> "SignDiff":
        outcome = {}
        for key, ours in self.cells.items():
            theirs = reference[key]
            if key[1] in self.unevaluable:
                outcome[key] = UNEVALUABLE
            elif theirs == AMBIGUOUS:
                outcome[key] = REFERENCE_AMBIGUOUS
            else:
                outcome[key] = MATCH if ours == theirs else MISMATCH
        return SignDiff(computed=dict(self.cells), reference=dict(reference), outcome=outcome,
                        rel_step=self.rel_step, closure=self.closure,
                        unevaluable=dict(self.unevaluable))


@dataclass
class SignDiff:
    computed: dict
    reference: dict
    outcome: dict
    rel_step: float
    closure: str
    unevaluable: dict = field(default_factory=dict)

    def cells_with(self, outcome: str):
        return sorted((k for k, v in self.outcome.items() if v == outcome),
                      key=lambda k: (SIGN_ROWS.index(k[0]), SIGN_COLUMNS.index(k[1])))

    def report(self) -> str:
        counts = {o: len(self.cells_with(o)) for o in (MATCH, MISMATCH, REFERENCE_AMBIGUOUS, UNEVALUABLE)}
        out = [
            f"comparative statics sign diff (closure={self.closure}, rel_step={self.rel_step!r})",
            "counts: " + ", ".join(f"{k}={v}" for k, v in counts.items()),
            "",
            "computed / reference per cell (* marks a mismatch, ? a reference ±):",
            "row    " + " ".join(f"{c:>8}" for c in SIGN_COLUMNS),
        ]
        marks = {MATCH: " ", MISMATCH: "*", REFERENCE_AMBIGUOUS: "?", UNEVALUABLE: "!"}
        for row in SIGN_ROWS:
            cells = []
            for col in SIGN_COLUMNS:
                key = (row, col)
                cells.append(f"{self.computed[key]}/{self.reference[key]}{marks[self.outcome[key]]}".rjust(8))
            out.append(f"{row:<6} " + " ".join(cells))
        out.append("")
        out.append("mismatches:")
        for row, col in self.cells_with(MISMATCH):
            key = (row, col)
            out.append(f"  d{row}/d{col}: reference {self.reference[key]}, model yields {self.computed[key]}")
        if not self.cells_with(MISMATCH):
            out.append("  none")
        if self.unevaluable:
            out.append("")
            out.append("unevaluable columns:")
            for col, why in sorted(self.unevaluable.items()):
                out.append(f"  {col}: {why}")
        return "\n".join(out) + "\n"


def _perturb(params: ModelParams, col: str, sign: float, rel_step: float) -> ModelParams:
    if col == "alpha_f":
        # alpha_f moves with alpha_i held to alpha_i + alpha_f = 1
        delta = rel_step * params.alpha_f
        return params.replace(alpha_i=params.alpha_i - sign * delta)
    value = getattr(params, col)
    return params.replace(**{col: value + sign * rel_step * abs(value)})


def _solve_column(args):
    params, col, rel_step, closure, q_target = args
    out = {}
    try:
        for sign in (1.0, -1.0):
            ss = solve_follower(_perturb(params, col, sign, rel_step), closure, q_target=q_target)
            out[sign] = {row: getattr(ss, row) for row in SIGN_ROWS}
    except ModelError as exc:
        return col, None, f"{type(exc).__name__}: {exc}"
    return col, out, None


def comparative_statics(
    params: ModelParams,
    closure=DEFAULT_CLOSURE,
    rel_step: float = 1e-2,
    *,
    q_target: float = DEFAULT_Q_TARGET,
    workers: int = 1,
) -> SignTable:
    """Sign of each steady-state response to a two-sided relative perturbation.

    Each parameter is moved by ``+/- rel_step`` times its value and the
    follower steady state re-solved.  A column whose perturbed solve fails
    is marked unevaluable (every cell ±) with the error kept as a
    diagnostic.  ``workers > 1`` spreads columns over processes; the
    result does not depend on evaluation order.
    """
    closure = Closure.parse(closure)
    if not (0.0 < rel_step < 0.5):
        raise DomainError(f"rel_step must lie in (0, 0.5), got {rel_step!r}")
    base = solve_follower(params, closure, q_target=q_target)
    level = {row: getattr(base, row) for row in SIGN_ROWS}

    jobs = [(params, col, rel_step, closure, q_target) for col in SIGN_COLUMNS]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_column, jobs))
    else:
        results = [_solve_column(j) for j in jobs]

    table = SignTable(cells={}, rel_step=rel_step, closure=closure.value)
    for col, out, err in results:
        if out is None:
            log.warning("column %s unevaluable: %s", col, err)
            table.unevaluable[col] = err
            for row in SIGN_ROWS:
                table.cells[(row, col)] = AMBIGUOUS
            continue
        for row in SIGN_ROWS:
            up = out[1.0][row] - level[row]
            down = level[row] - out[-1.0][row]
            table.up[(row, col)] = up
            table.down[(row, col)] = down
            table.cells[(row, col)] = classify_cell(up, down, level[row])
    return table


def confirm_signs(params: ModelParams, closure=DEFAULT_CLOSURE, steps=(1e-2, 1e-3), **kwargs):
    """Sign tables at several steps and the cells on which they disagree."""
    tables = [comparative_statics(params, closure, s, **kwargs) for s in steps]
    first = tables[0].cells
    unstable = sorted({k for t in tables[1:] for k in first if t.cells[k] != first[k]})
    return tables, unstable
