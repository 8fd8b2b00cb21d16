import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from govinvest.equilibrium import (
    Closure,
    accommodation_rule,
    compare_regimes,
    follower_G,
    leader_G,
    public_good_scan,
    solve_follower,
    solve_leader,
    steady_state_foc_residuals,
)
from govinvest.exceptions import ConvergenceError, DomainError, InfeasibleError
from govinvest.model_core import (
    FunctionalForms,
    LinearDestruction,
    ModelParams,
    QuadraticAdjustmentCost,
    business_creation,
    creative_destruction,
    marginal_adjustment_cost,
)
from govinvest.newton import damped_newton, fd_jacobian

FEASIBLE_PUBLIC_GOOD = dict(chi=0.05, u=1.0, M=1.0)


class SaturatingCreation:
    """C(G) = c0 (1 - exp(-G)); no closed-form leader."""

    def value(self, G, params):
        return params.c0 * (1.0 - np.exp(-np.asarray(G, dtype=float)))

    def deriv(self, G, params):
        return params.c0 * np.exp(-np.asarray(G, dtype=float))


def golden_section_max(f, lo, hi, iters=200):
    """Golden-section search on log G in extended precision."""
    f = np.vectorize(f, otypes=[np.longdouble])
    a, b = np.log(np.longdouble(lo)), np.log(np.longdouble(hi))
    invphi = (np.sqrt(np.longdouble(5)) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    for _ in range(iters):
        if f(np.exp(c)) > f(np.exp(d)):
            b = d
        else:
            a = c
        c, d = b - invphi * (b - a), a + invphi * (b - a)
    return float(np.exp((a + b) / 2))


SATURATING = FunctionalForms(creation=SaturatingCreation(), destruction=LinearDestruction())


class TestNewton:
    def test_solves_small_system(self):
        f = lambda x: np.array([x[0] ** 2 + x[1] ** 2 - 4.0, x[0] - x[1]])
        res = damped_newton(f, [3.0, 1.0])
        assert np.allclose(res.x, [math.sqrt(2), math.sqrt(2)], atol=1e-12)
        assert res.residual_norm < 1e-10

    def test_failure_carries_diagnostics(self):
        with pytest.raises(ConvergenceError) as info:
            damped_newton(lambda x: np.array([x[0] ** 2 + 1.0]), [1.0], max_iter=20)
        diag = info.value.diagnostics
        assert {"reason", "x", "residual", "residual_norm", "iterations"} <= set(diag)

    def test_fd_jacobian(self):
        f = lambda x: np.array([x[0] * x[1], np.sin(x[0])])
        J = fd_jacobian(f, [1.0, 2.0])
        assert np.allclose(J, [[2.0, 1.0], [math.cos(1.0), 0.0]], atol=1e-8)


class TestLeader:
    def test_closed_form(self):
        P = ModelParams(c0=2.0, gamma=0.5, d0=0.5)
        assert leader_G(P) == pytest.approx(4.0, rel=1e-15)
        assert creative_destruction(leader_G(P), P) == pytest.approx(2.0, rel=1e-15)

    @given(c0=st.floats(0.5, 5.0), gamma=st.floats(0.1, 0.9), d0=st.floats(0.1, 2.0))
    def test_closed_form_matches_golden_section(self, c0, gamma, d0):
        P = ModelParams(c0=c0, gamma=gamma, d0=d0)
        ref = golden_section_max(lambda G: c0 * G ** gamma - d0 * G, 1e-12, 1e20)
        assert abs(leader_G(P) - ref) <= 1e-8 * max(1.0, ref)

    def test_first_order_condition(self, params):
        G = leader_G(params)
        C = params.forms.creation.deriv(G, params)
        D = params.forms.destruction.deriv(G, params)
        assert abs(C - D) < 1e-10

    def test_numeric_path(self):
        P = ModelParams(forms=SATURATING)
        assert not P.forms.has_closed_form_leader
        assert leader_G(P) == pytest.approx(math.log(P.c0 / P.d0), rel=1e-10)

    def test_infeasible_when_no_positive_creation(self):
        P = ModelParams(c0=0.1, d0=1.0, forms=SATURATING)  # s'(0) < 0
        with pytest.raises(InfeasibleError):
            leader_G(P)

    def test_optimality_on_log_grid(self, params):
        G_hat = leader_G(params)
        s_hat = creative_destruction(G_hat, params)
        grid = np.logspace(-6, 3, 1000)
        assert np.all(creative_destruction(grid, params) <= s_hat)

    def test_solve_leader(self, params):
        eq = solve_leader(params, 5.0, 10.0)
        assert eq.U_hat == pytest.approx(100.0)
        assert eq.s_hat == pytest.approx(2.0)
        assert eq.B_hat == pytest.approx((2 * 10 * 5) ** (1 / 3))
        assert eq.I_hat == params.p * 5.0
        assert eq.K_hat == 10.0

    def test_investment_hand_value(self):
        assert solve_leader(ModelParams(p=2.0), 3.0, 1.0).I_hat == 6.0

    def test_B_hat_increases_in_L_hat(self, params):
        B = [solve_leader(params, L, 10.0).B_hat for L in (1.0, 2.0, 5.0, 9.0)]
        assert all(b2 > b1 for b1, b2 in zip(B, B[1:]))

    @pytest.mark.parametrize("L_hat, K0", [(0.0, 1.0), (1.0, -1.0), (math.nan, 1.0)])
    def test_bad_inputs(self, params, L_hat, K0):
        with pytest.raises(DomainError):
            solve_leader(params, L_hat, K0)

    def test_json(self, params):
        doc = json.loads(solve_leader(params, 5.0, 10.0).to_json())
        assert set(doc) >= {"G_hat", "s_hat", "L_hat", "K_hat", "I_hat", "U_hat", "B_hat"}


class TestFollowerG:
    P = ModelParams(c0=2.0, gamma=0.5, d0=0.5)

    def test_smallest_root(self):
        assert follower_G(1.5, self.P) == pytest.approx(1.0, rel=1e-14)

    def test_tangency(self):
        assert follower_G(2.0, self.P) == pytest.approx(4.0, rel=1e-12)

    def test_above_maximum(self):
        with pytest.raises(InfeasibleError):
            follower_G(2.01, self.P)

    @pytest.mark.parametrize("s", [0.0, -1.0])
    def test_nonpositive(self, s):
        with pytest.raises(DomainError):
            follower_G(s, self.P)

    @given(st.floats(1e-6, 1.999))
    def test_inverse_on_increasing_branch(self, s):
        G = follower_G(s, self.P)
        assert 0.0 < G <= 4.0
        assert creative_destruction(G, self.P) == pytest.approx(s, rel=1e-10)

    def test_numeric_branch(self):
        P = ModelParams(forms=SATURATING)
        G = follower_G(0.5, P)
        assert float(creative_destruction(G, P)) == pytest.approx(0.5, rel=1e-12)
        assert G < leader_G(P)

    def test_accommodation_rule(self, params):
        from govinvest.model_core import EconomyState
        rule = accommodation_rule(params)
        G = rule(0, EconomyState(1.0, 5.0, 1.0))
        assert creative_destruction(G, params) == pytest.approx(0.5, rel=1e-12)


@pytest.fixture(scope="module")
def follower_solutions():
    P = ModelParams()
    return {
        "fixed-q": (P, solve_follower(P, "fixed-q")),
        "rent": (P, solve_follower(P, "rent")),
        "public-good": (ModelParams(**FEASIBLE_PUBLIC_GOOD),
                        solve_follower(ModelParams(**FEASIBLE_PUBLIC_GOOD), "public-good")),
    }


@pytest.mark.parametrize("closure", ["fixed-q", "rent", "public-good"])
class TestFollower:
    def test_identities(self, follower_solutions, closure):
        P, ss = follower_solutions[closure]
        assert ss.I == P.p * ss.L
        assert ss.s == ss.L / P.Q
        assert creative_destruction(ss.G, P) == pytest.approx(ss.s, rel=1e-9)
        assert ss.mu == pytest.approx(1.0 + marginal_adjustment_cost(ss.I, P), rel=1e-10)
        assert ss.residual_norm < 1e-8
        assert ss.closure == closure

    def test_closure_condition(self, follower_solutions, closure):
        from govinvest.model_core import production_gradient
        P, ss = follower_solutions[closure]
        F_K, F_N, F_L, F_G = production_gradient(ss.K, ss.N, ss.L, ss.G, P)
        assert F_K == pytest.approx(P.r * ss.mu, rel=1e-9)
        if closure == "rent":
            assert F_L == pytest.approx(P.p * ss.mu, rel=1e-9)
            assert abs(ss.theta) < 1e-8
        elif closure == "public-good":
            assert F_G == pytest.approx(1.0, rel=1e-9)
        else:
            assert ss.mu == pytest.approx(1.5, rel=1e-12)

    def test_euler_residual_identity(self, follower_solutions, closure):
        P, ss = follower_solutions[closure]
        res = steady_state_foc_residuals(P, ss)
        assert max(abs(v) for v in res.values()) < 1e-8

    def test_accommodation_round_trip(self, follower_solutions, closure):
        P, ss = follower_solutions[closure]
        assert abs(follower_G(ss.L / P.Q, P) - ss.G) < 1e-10 * max(1.0, ss.G)

    def test_leader_dominates(self, follower_solutions, closure):
        P, ss = follower_solutions[closure]
        assert creative_destruction(leader_G(P), P) >= ss.s

    def test_business_creation(self, follower_solutions, closure):
        P, ss = follower_solutions[closure]
        assert ss.B == pytest.approx(business_creation(ss.s, ss.K, ss.L, P), rel=1e-14)

    def test_json(self, follower_solutions, closure):
        _, ss = follower_solutions[closure]
        doc = json.loads(ss.to_json())
        for key in ("I", "K", "L", "G", "U", "N", "w", "s", "mu", "theta", "B",
                    "residual_norm", "closure", "iterations", "residuals"):
            assert key in doc
        assert len(doc["residuals"]) == 10


class TestFollowerSpecifics:
    def test_fixed_q_closed_form(self, params):
        ss = solve_follower(params, "fixed-q")
        W = params.forms.cost.weight(params)
        assert ss.I == pytest.approx(0.5 / (params.kappa * W), rel=1e-12)
        assert ss.U == pytest.approx(100.0) and ss.N == pytest.approx(65.0)

    def test_higher_property_price_lowers_location(self, params):
        base = solve_follower(params, "fixed-q")
        bumped = solve_follower(params.replace(p=params.p * 1.01), "fixed-q")
        assert bumped.L < base.L

    def test_rent_closure_location_rises_with_price(self, params):
        # characterises the zero-rent closure: the price effect on L flips
        base = solve_follower(params, "rent")
        bumped = solve_follower(params.replace(p=params.p * 1.01), "rent")
        assert bumped.L > base.L

    @pytest.mark.parametrize("closure", ["fixed-q", "rent"])
    def test_initial_guesses(self, params, closure):
        ref = solve_follower(params, closure)
        for guess in [(0.5, 0.5, 0.5, 0.5), (20.0, 20.0, 20.0, 20.0), (1.0, 5.0, 0.5, 20.0)]:
            ss = solve_follower(params, closure, guess)
            assert abs(ss.K - ref.K) < 1e-8 * ref.K and abs(ss.L - ref.L) < 1e-8

    def test_public_good_infeasible_at_default(self, params):
        with pytest.raises(InfeasibleError, match="public-good"):
            solve_follower(params, "public-good")
        _, vals = public_good_scan(params)
        assert np.all(vals > 0.0)

    def test_fixed_q_infeasible_when_target_needs_too_much_location(self, params):
        with pytest.raises(InfeasibleError, match="accommodation limit"):
            solve_follower(params.replace(p=0.01), "fixed-q")
        with pytest.raises(DomainError):
            solve_follower(params, "fixed-q", q_target=1.0)

    def test_sector_loading_solves(self):
        P = ModelParams(forms=FunctionalForms(cost=QuadraticAdjustmentCost("sector")))
        ss = solve_follower(P, "fixed-q")
        assert ss.I == pytest.approx(0.5 / (P.kappa * 1.18), rel=1e-12)

    def test_bad_guess(self, params):
        with pytest.raises(DomainError):
            solve_follower(params, "rent", (1.0, -1.0, 1.0, 1.0))

    def test_bad_closure(self, params):
        with pytest.raises(ValueError):
            solve_follower(params, "nonsense")
        assert Closure.parse("rent") is Closure.RENT

    @given(p=st.floats(0.5, 2.0), e=st.floats(0.0, 0.5), Q=st.floats(5.0, 20.0), r=st.floats(0.02, 0.1))
    def test_leader_dominance_over_draws(self, p, e, Q, r):
        P = ModelParams(p=p, e=e, Q=Q, r=r)
        try:
            ss = solve_follower(P, "rent")
        except InfeasibleError:
            return
        assert creative_destruction(leader_G(P), P) >= ss.s - 1e-12

    @given(st.sampled_from(["fixed-q", "rent"]), st.floats(0.5, 2.0), st.floats(0.1, 0.35))
    def test_identities_hold_under_draws(self, closure, p, alpha_i):
        P = ModelParams(p=p, alpha_i=alpha_i)
        ss = solve_follower(P, closure)
        assert ss.I == P.p * ss.L and ss.s == ss.L / P.Q
        assert ss.mu == pytest.approx(1.0 + marginal_adjustment_cost(ss.I, P), rel=1e-10)


class TestCompare:
    def test_equal_stocks_favor_leader(self, params):
        ss = solve_follower(params)
        cmp = compare_regimes(params, ss.L, ss.K, follower=ss)
        assert cmp.B_hat >= cmp.B_star and cmp.larger == "leader"

    def test_half_location_reproducible(self, params):
        ss = solve_follower(params)
        a = compare_regimes(params, ss.L / 2, ss.K)
        b = compare_regimes(params, ss.L / 2, ss.K)
        assert a.ratio == b.ratio and a.to_json() == b.to_json()
        assert a.ratio == a.B_hat / a.B_star
        assert a.larger in ("leader", "follower")


def test_public_good_multistart_where_feasible():
    import itertools

    P = ModelParams(**FEASIBLE_PUBLIC_GOOD)
    sols = [solve_follower(P, "public-good", g) for g in itertools.product((0.5, 1.0, 5.0, 20.0), repeat=4)]
    X = np.array([[s.K, s.L, s.G, s.mu] for s in sols])
    assert np.max(np.ptp(X, axis=0)) < 1e-8
    assert max(s.residual_norm for s in sols) < 1e-10
