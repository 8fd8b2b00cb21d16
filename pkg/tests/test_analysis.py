import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import govinvest.analysis as analysis
from govinvest.analysis import (
    AMBIGUOUS,
    MATCH,
    MISMATCH,
    NONHYPERBOLIC,
    REFERENCE_AMBIGUOUS,
    REFERENCE_SIGNS,
    SIGN_COLUMNS,
    SIGN_ROWS,
    STABLE,
    UNEVALUABLE,
    UNSTABLE,
    classify_cell,
    classify_stability,
    cobweb,
    comparative_statics,
    confirm_signs,
    find_fixed_points,
    forward_iteration_check,
    map_derivative,
)
from govinvest.dynamics import LocationMapConfig, sigmoid_three_equilibria_config
from govinvest.exceptions import ConvergenceError, DomainError


def constant(s, phi=0.5, Q=10.0):
    return LocationMapConfig(phi=phi, Q=Q, s_source=s)


class TestFixedPoints:
    def test_constant_s(self):
        pts = find_fixed_points(constant(0.5), 20.0, 200)
        assert [p.L_star for p in pts] == pytest.approx([0.0, 5.0], abs=1e-12)

    def test_no_creation(self):
        pts = find_fixed_points(constant(0.0), 20.0, 200)
        assert [p.L_star for p in pts] == [0.0]

    def test_sigmoid_structure(self):
        cfg = sigmoid_three_equilibria_config()
        pts = find_fixed_points(cfg, 20.0, 1000)
        positive = [p for p in pts if p.L_star > 0]
        assert len(positive) == 3
        assert [p.classification for p in positive] == [STABLE, UNSTABLE, STABLE]
        for p in pts:
            assert abs(cfg(p.L_star) - p.L_star) < 1e-10
            assert forward_iteration_check(p, cfg)

    def test_bisection_oracle(self):
        # independent bisection on the raw map difference
        cfg = sigmoid_three_equilibria_config()
        f = lambda L: cfg(L) - L
        grid = np.linspace(1e-9, 20.0, 2001)
        vals = np.array([f(L) for L in grid])
        roots = []
        for i in np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]:
            lo, hi = grid[i], grid[i + 1]
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if np.sign(f(mid)) == np.sign(f(lo)):
                    lo = mid
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
        found = [p.L_star for p in find_fixed_points(cfg, 20.0, 1000) if p.L_star > 0]
        assert found == pytest.approx(roots, abs=1e-9)

    def test_tangency_reported(self):
        cfg = LocationMapConfig(0.5, 10.0, lambda L: L / 10 + (L - 5) ** 2 / 100)
        pts = find_fixed_points(cfg, 20.0, 100)
        assert any(p.classification == NONHYPERBOLIC and abs(p.L_star - 5.0) < 1e-5 for p in pts)

    def test_errors(self):
        with pytest.raises(DomainError):
            find_fixed_points(constant(0.5), 20.0, 10)
        with pytest.raises(DomainError):
            find_fixed_points(constant(0.5), -1.0, 200)
        with pytest.raises(DomainError):
            find_fixed_points(constant(0.5, phi=0.0), 20.0, 200)

    @given(s=st.floats(0.05, 1.9), phi=st.floats(0.05, 1.0))
    def test_constant_s_property(self, s, phi):
        cfg = constant(s, phi=phi)
        pts = find_fixed_points(cfg, 3.0 * s * cfg.Q, 300)
        assert [p.L_star for p in pts] == pytest.approx([0.0, s * cfg.Q], rel=1e-10, abs=1e-12)
        L = s * cfg.Q
        h = 1e-6 * L
        numeric = (cfg(L + h) - cfg(L - h)) / (2 * h)
        assert abs(map_derivative(L, cfg) - numeric) < 1e-8
        assert pts[1].classification == (STABLE if phi * s < 2 else UNSTABLE)


class TestClassify:
    def test_hand_values(self):
        cfg = constant(0.5)
        fp = classify_stability(5.0, cfg)
        assert fp.map_derivative == pytest.approx(0.75) and fp.classification == STABLE
        fp = classify_stability(0.0, cfg)
        assert fp.map_derivative == pytest.approx(1.25) and fp.classification == UNSTABLE

    def test_frozen_location(self):
        fp = classify_stability(3.0, constant(0.5, phi=0.0))
        assert fp.map_derivative == 1.0 and fp.classification == NONHYPERBOLIC


class TestCobweb:
    def test_stable_start(self):
        series = cobweb(constant(0.5), 5.0, 10)
        assert np.all(series.L_t == 5.0) and np.all(series.L_next == 5.0)
        assert series.converged

    def test_moves_away_from_unstable(self):
        cfg = sigmoid_three_equilibria_config()
        middle = [p for p in find_fixed_points(cfg, 20.0, 1000) if p.classification == UNSTABLE][-1]
        series = cobweb(cfg, middle.L_star + 1e-3, 10)
        gaps = series.L_next[:4] - middle.L_star
        assert np.all(gaps > 0) and np.all(np.diff(gaps) > 0)

    def test_converges(self):
        series = cobweb(constant(0.5), 1.0, 200)
        assert series.converged and series.L_next[-1] == pytest.approx(5.0, abs=1e-10)

    def test_divergence(self):
        # escapes the window: 1 -> 2.2 -> 4.05 > L_max
        series = cobweb(constant(0.5, phi=3.0), 1.0, 100, L_max=3.0)
        assert series.diverged and not series.converged
        assert len(series.L_t) == 1
        # overshoots past zero on the first step
        series = cobweb(constant(0.5, phi=3.0), 9.0, 100)
        assert series.diverged and len(series.L_t) == 0

    def test_curve_and_csv(self):
        series = cobweb(constant(0.5), 1.0, 5)
        assert np.all(np.diff(series.curve_L) > 0)
        rows = list(csv.reader(io.StringIO(series.to_csv())))
        assert rows[0] == ["L_t", "L_next", "curve_L", "curve_map"]
        assert rows[1][0] == "1.0" and rows[-1][0] == ""

    def test_errors(self):
        with pytest.raises(DomainError):
            cobweb(constant(0.5), -1.0, 5)
        with pytest.raises(DomainError):
            cobweb(constant(0.5), 1.0, 0)


class TestSignClassification:
    @pytest.mark.parametrize(
        "up, down, expected",
        [(1.0, 2.0, "+"), (-1.0, -0.5, "-"), (0.0, 0.0, "0"), (1.0, -1.0, AMBIGUOUS),
         (1e-12, 1.0, AMBIGUOUS), (1e-12, -1e-13, "0"), (float("nan"), 1.0, AMBIGUOUS)],
    )
    def test_cells(self, up, down, expected):
        assert classify_cell(up, down, 1.0) == expected

    def test_reference_table(self):
        assert len(REFERENCE_SIGNS) == len(SIGN_ROWS) * len(SIGN_COLUMNS)
        assert REFERENCE_SIGNS[("U", "z")] == "+"
        assert REFERENCE_SIGNS[("U", "p")] == "-"
        assert REFERENCE_SIGNS[("theta", "phi")] == "+"
        assert REFERENCE_SIGNS[("w", "p")] == AMBIGUOUS
        assert REFERENCE_SIGNS[("N", "g")] == AMBIGUOUS
        assert REFERENCE_SIGNS[("s", "Q")] == "-" and REFERENCE_SIGNS[("L", "Q")] == "0"
        assert set(REFERENCE_SIGNS.values()) <= {"+", "-", "0", AMBIGUOUS}


@pytest.fixture(scope="module")
def tables():
    from govinvest.model_core import ModelParams
    return confirm_signs(ModelParams(), steps=(1e-2, 1e-3, 5e-3))


class TestComparativeStatics:
    def test_every_cell_classified(self, tables):
        table = tables[0][0]
        assert set(table.cells) == {(r, c) for r in SIGN_ROWS for c in SIGN_COLUMNS}

    def test_immigration_row(self, tables):
        table = tables[0][0]
        assert [table.cell("U", c) for c in ("z", "M", "v", "alpha_i", "alpha_f")] == ["+", "+", "-", "+", "-"]
        assert [table.cell("U", c) for c in ("p", "e", "tau")] == ["0", "0", "0"]

    def test_diff_marks_immigration_cells(self, tables):
        diff = tables[0][0].diff()
        for c in ("p", "e", "tau"):
            assert diff.outcome[("U", c)] == MISMATCH
        assert diff.outcome[("w", "p")] == REFERENCE_AMBIGUOUS
        report = diff.report()
        assert "dU/dp: reference -, model yields 0" in report

    def test_step_robustness(self, tables):
        _, unstable = tables
        assert unstable == []

    def test_csv(self, tables):
        rows = list(csv.reader(io.StringIO(tables[0][0].to_csv())))
        assert rows[0] == ["row", *SIGN_COLUMNS]
        assert [r[0] for r in rows[1:]] == list(SIGN_ROWS)

    def test_unevaluable_column(self, params, monkeypatch):
        real = analysis.solve_follower

        def flaky(P, *args, **kwargs):
            if P.M != params.M:
                raise ConvergenceError("forced failure", {"reason": "test"})
            return real(P, *args, **kwargs)

        monkeypatch.setattr(analysis, "solve_follower", flaky)
        table = comparative_statics(params)
        assert "M" in table.unevaluable and "forced failure" in table.unevaluable["M"]
        assert all(table.cell(r, "M") == AMBIGUOUS for r in SIGN_ROWS)
        diff = table.diff()
        assert diff.outcome[("U", "M")] == UNEVALUABLE
        assert "unevaluable" in diff.report()

    def test_parallel_matches_sequential(self, params, tables):
        par = comparative_statics(params, workers=2)
        assert par.cells == tables[0][0].cells

    def test_bad_step(self, params):
        with pytest.raises(DomainError):
            comparative_statics(params, rel_step=0.0)
