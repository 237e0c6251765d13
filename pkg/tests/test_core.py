"""Portfolio optimization and impact-matrix tests."""
import math

import numpy as np
import pytest

from levcycle import (ModelParams, TABLE1, build_phi,
                      leverage_closed_form_no_systematic, leverage_residual,
                      optimal_diversification, portfolio_variance,
                      solve_leverage)
from levcycle.errors import NonPositiveRisk, NoRootInBracket, VarInfeasible


def foc_lhs(lam, sigma_d, sigma_u, p):
    """Untransformed first-order condition; independent check target."""
    t1 = sigma_d ** (1 / 3) / (p.alpha ** (2 / 3) * (p.nim / (2 * p.c)) ** (1 / 3) * lam)
    t2 = (1.0 / (p.alpha * lam) ** 2 - sigma_u) ** (2 / 3)
    return t1 - t2


def bisect_oracle(sigma_d, sigma_u, p, iters=200):
    """Plain bisection on the untransformed condition: the reference root."""
    lo = 1e-9
    hi = (1 - 1e-12) / (p.alpha * math.sqrt(sigma_u)) if sigma_u > 0 else \
        4 * p.nim / (2 * p.c * p.alpha**2 * sigma_d)
    assert foc_lhs(lo, sigma_d, sigma_u, p) < 0 < foc_lhs(hi, sigma_d, sigma_u, p)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if foc_lhs(mid, sigma_d, sigma_u, p) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestSolveLeverage:
    def test_closed_form_no_systematic(self):
        p = TABLE1
        lam = solve_leverage(0.0009, 0.0, p)
        exact = leverage_closed_form_no_systematic(0.0009, p)
        assert exact == pytest.approx(0.08 / (2 * 0.1 * 1.64**2 * 0.0009))
        assert lam == pytest.approx(exact, rel=1e-10)
        assert lam == pytest.approx(165.245, rel=1e-3)

    def test_against_bisection_oracle(self):
        p = TABLE1
        lam = solve_leverage(0.0009, 9e-6, p)
        assert lam == pytest.approx(bisect_oracle(0.0009, 9e-6, p), rel=1e-10)
        assert leverage_residual(lam, 0.0009, 9e-6, p) < 1e-12

    def test_monotone_decreasing_in_sigma_d(self):
        p = TABLE1
        grid = 0.0009 * 2.0 ** np.arange(6)
        lams = [solve_leverage(sd, 9e-6, p) for sd in grid]
        oracle = [bisect_oracle(sd, 9e-6, p) for sd in grid]
        assert np.allclose(lams, oracle, rtol=1e-9)
        assert all(a > b for a, b in zip(lams, lams[1:]))

    def test_unique_root_property(self):
        # one sign change of the first-order condition on a fine grid,
        # for random feasible parameter draws
        rng = np.random.default_rng(42)
        for _ in range(50):
            p = ModelParams(alpha=rng.uniform(0.5, 3.0), c=rng.uniform(0.01, 1.0),
                            nim=rng.uniform(0.01, 0.5))
            sd = 10 ** rng.uniform(-5, -2)
            su = 10 ** rng.uniform(-8, -4)
            hi = (1 - 1e-9) / (p.alpha * math.sqrt(su))
            lams = np.linspace(1e-6, hi, 4001)
            signs = np.sign([foc_lhs(x, sd, su, p) for x in lams])
            changes = np.count_nonzero(np.diff(signs) != 0)
            assert changes == 1
            lam = solve_leverage(sd, su, p)
            assert leverage_residual(lam, sd, su, p) < 1e-10

    def test_joint_optimality(self):
        # solver output satisfies the diversification first-order condition
        p = TABLE1
        lam = solve_leverage(0.0009, 9e-6, p)
        m = optimal_diversification(lam, 0.0009, 9e-6, p.alpha)
        sigma_p = math.sqrt(portfolio_variance(0.0009, 9e-6, m))
        m_foc = lam * math.sqrt(0.0009) * math.sqrt(p.alpha * p.nim / (2 * p.c * sigma_p))
        assert m == pytest.approx(m_foc, rel=1e-8)

    def test_binding_var_constraint(self):
        p = TABLE1
        lam = solve_leverage(0.0009, 9e-6, p)
        m = optimal_diversification(lam, 0.0009, 9e-6, p.alpha)
        sigma_p = math.sqrt(portfolio_variance(0.0009, 9e-6, m))
        assert p.alpha * sigma_p * lam == pytest.approx(1.0, abs=1e-8)

    def test_nonpositive_risk(self):
        with pytest.raises(NonPositiveRisk):
            solve_leverage(0.0, 1e-6, TABLE1)

    def test_no_root_when_diversification_free(self):
        # c = 0 removes the interior optimum entirely
        with pytest.raises(NoRootInBracket):
            solve_leverage(0.0009, 9e-6, TABLE1.with_(c=0.0))

    def test_tiny_parameters_still_root(self):
        # the feasible region always contains the root, however extreme;
        # squeezed against the bracket edge the residual is limited by
        # cancellation in 1/alpha^2 - sigma_u*lam^2, not by the solver
        p = TABLE1.with_(nim=1e-12)
        lam = solve_leverage(1e-30, 1e6, p)
        assert 0 < lam < 1.0 / (p.alpha * math.sqrt(1e6))
        assert leverage_residual(lam, 1e-30, 1e6, p) < 1e-5


class TestDiversification:
    def test_zero_systematic_arithmetic(self):
        assert optimal_diversification(10.0, 0.005, 0.0, 1.0) == pytest.approx(0.5)

    def test_divergence_at_var_bound(self):
        sigma_u = 1e-4
        alpha = 1.64
        bound = 1.0 / (alpha * math.sqrt(sigma_u))
        for eps, floor in [(1e-3, 1e2), (1e-6, 1e5), (1e-9, 1e8)]:
            m = optimal_diversification(bound * (1 - eps), 0.001, sigma_u, alpha)
            assert m > floor
        with pytest.raises(VarInfeasible):
            optimal_diversification(bound, 0.001, sigma_u, alpha)

    def test_portfolio_variance(self):
        assert portfolio_variance(0.01, 0.0, 1.0) == pytest.approx(0.01)
        assert portfolio_variance(0.01, 0.002, 1e12) == pytest.approx(0.002, rel=1e-6)
        with pytest.raises(VarInfeasible):
            portfolio_variance(0.01, 0.0, 0.0)


class TestPhiMatrix:
    def test_single_asset_portfolio(self):
        phi = build_phi(3.0, 1.0, TABLE1.with_(M=2))
        assert phi.offdiag == 0.0
        assert phi.diag == pytest.approx(2.0 / 100.0)

    def test_full_diversification(self):
        p = TABLE1.with_(M=5)
        phi = build_phi(3.0, 5.0, p)
        assert phi.offdiag == pytest.approx(phi.diag)
        assert phi.diag == pytest.approx(2.0 / (100.0 * 5))
        assert phi.largest_eigenvalue == pytest.approx(2.0 / 100.0)

    def test_boundary_eigenvalue(self):
        p = TABLE1.with_(M=4)
        phi = build_phi(p.gamma + 1.0, 2.5, p)
        assert phi.largest_eigenvalue == pytest.approx(1.0, abs=1e-14)

    def test_eigen_identity_vs_generic_solver(self):
        # closed-form largest eigenvalue against numpy on the dense matrix;
        # the uniform mode dominates for every portfolio of at least one asset
        rng = np.random.default_rng(3)
        for M in range(2, 11):
            p = TABLE1.with_(M=M)
            for _ in range(5):
                m = rng.uniform(1.0, M)
                lam = rng.uniform(1.0, p.gamma)
                phi = build_phi(lam, m, p)
                ev = np.linalg.eigvalsh(phi.dense())
                assert phi.largest_eigenvalue == pytest.approx(
                    (lam - 1.0) / p.gamma, abs=1e-12)
                assert np.max(ev) == pytest.approx(phi.largest_eigenvalue, abs=1e-12)

    def test_sub_single_asset_portfolio_flips_dominance(self):
        # below one asset the off-diagonal turns negative and the
        # idiosyncratic mode outgrows the uniform one; the uniform mode
        # still equals (lam-1)/gamma exactly
        p = TABLE1.with_(M=4)
        phi = build_phi(5.0, 0.5, p)
        ev = np.linalg.eigvalsh(phi.dense())
        assert phi.market_eigenvalue == pytest.approx((5.0 - 1.0) / p.gamma, abs=1e-14)
        assert np.max(ev) == pytest.approx(phi.idio_eigenvalue, abs=1e-12)
        assert phi.idio_eigenvalue > phi.market_eigenvalue

    def test_m1_degeneracy(self):
        phi = build_phi(5.0, 1.0, TABLE1.with_(M=1))
        assert phi.offdiag == 0.0
        assert phi.diag == pytest.approx(4.0 / 100.0)
