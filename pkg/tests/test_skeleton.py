"""Deterministic maps: fixed points, Jacobians, the 1D reduction, IGARCH."""
import math

import numpy as np
import pytest

from levcycle import (IgarchState, MapKind, SlowState, TABLE1,
                      consistent_start, fixed_point, igarch_step,
                      iterate_skeleton, jacobian, map_1d, map_1d_derivative,
                      skeleton_step)
from levcycle.errors import StepTooLarge

#: parameter point where the flip cascade exists for the 3D map
CASCADE = TABLE1.with_(sigma_eps_slow=0.02**2, sigma_f_slow=(0.1 * 0.02) ** 2)


class TestSkeletonStep:
    def test_fixed_point_maps_to_itself(self):
        p = TABLE1.with_(omega=0.5)
        fp = fixed_point(MapKind.SKELETON3D, p)
        nxt, flags = skeleton_step(fp, p)
        assert not flags
        assert nxt.lam == pytest.approx(fp.lam, rel=1e-10)
        assert nxt.sigma_d == pytest.approx(fp.sigma_d, rel=1e-10)
        assert nxt.sigma_u == pytest.approx(fp.sigma_u, rel=1e-10)

    def test_frozen_expectations_at_full_memory(self):
        p = TABLE1.with_(omega=1.0)
        s0 = consistent_start(p)
        s1, _ = skeleton_step(s0, p)
        s2, _ = skeleton_step(s1, p)
        assert s1.sigma_d == s0.sigma_d and s1.sigma_u == s0.sigma_u
        assert s2.lam == pytest.approx(s1.lam, rel=1e-14)

    def test_baseline_converges_to_fixed_point(self):
        # large-memory branch of the baseline parameters is a single point
        p = TABLE1.with_(omega=0.9)
        states, events = iterate_skeleton(consistent_start(p), p, 3000)
        assert not events
        tail = np.array([s.lam for s in states[-100:]])
        assert np.ptp(tail) < 1e-9

    def test_interior_null_eigenvalue(self):
        # the expectation-feedback structure zeroes one eigenvalue at every
        # interior state, not only at the fixed point
        p = TABLE1.with_(omega=0.55)
        fp = fixed_point(MapKind.SKELETON3D, p)
        for scale in ((1.03, 0.96, 1.1), (0.98, 1.05, 0.9)):
            s = SlowState.from_expectations(fp.lam * scale[0],
                                            fp.sigma_d * scale[1],
                                            fp.sigma_u * scale[2], p)
            ev = jacobian(MapKind.SKELETON3D, s, p)
            assert np.min(np.abs(ev)) < 1e-6


class TestMap1d:
    def test_identity_at_full_memory(self):
        p = TABLE1.with_(omega=1.0)
        for lam in (1.0, 5.0, 50.0, 100.0):
            assert map_1d(lam, p) == pytest.approx(lam, rel=1e-14)

    def test_naive_expectations_at_unit_leverage(self):
        p = TABLE1.with_(omega=0.0)  # sqrt(Sigma_eps) = 0.03
        assert map_1d(1.0, p) == pytest.approx(1.0 / (1.64 * 0.03), rel=1e-6)
        assert map_1d(1.0, p) == pytest.approx(20.33, abs=0.01)

    def test_naive_expectations_closed_form(self):
        # omega = 0 reduces the bracket to the squared amplification factor
        p = TABLE1.with_(omega=0.0)
        alpha, gamma, se = p.alpha, p.gamma, p.sigma_eps_slow
        for lam in np.linspace(1.0, 95.0, 25):
            phi = (lam - 1.0) / gamma
            expected = (1.0 - phi) / (alpha * math.sqrt(se))
            assert map_1d(lam, p) == pytest.approx(expected, rel=1e-12)

    def test_derivative_matches_finite_difference(self):
        p = TABLE1.with_(omega=0.3, sigma_eps_slow=0.005**2)
        for lam in (2.0, 20.0, 60.0):
            h = lam * 1e-7
            fd = (map_1d(lam + h, p) - map_1d(lam - h, p)) / (2 * h)
            assert map_1d_derivative(lam, p) == pytest.approx(fd, rel=1e-6)

    def test_maximum_decreasing_in_memory(self):
        # holds on the low-memory side where the variance term shapes the
        # hump; for omega beyond ~0.55 the identity branch (lam/sqrt(omega))
        # takes over and the maximum turns back up
        p = TABLE1.with_(sigma_eps_slow=0.005**2)
        grid = np.linspace(1.0, p.lambda_max - 1e-6, 4001)
        maxima = []
        for omega in (0.05, 0.1, 0.2, 0.3, 0.4, 0.5):
            pv = p.with_(omega=float(omega))
            maxima.append(max(map_1d(x, pv) for x in grid))
        assert all(a > b for a, b in zip(maxima, maxima[1:]))


class TestFixedPoints:
    def test_1d_memory_invariance(self):
        p = TABLE1.with_(sigma_eps_slow=0.005**2)
        fps = [fixed_point(MapKind.REDUCED1D, p.with_(omega=w))
               for w in (0.1, 0.5, 0.9)]
        assert abs(fps[0] - fps[1]) < 1e-9
        assert abs(fps[1] - fps[2]) < 1e-9

    def test_1d_closed_form(self):
        # the fixed-point equation is linear: lam* = (gamma+1)/(1+gamma alpha s)
        p = TABLE1.with_(omega=0.0, sigma_eps_slow=0.005**2)
        s = math.sqrt(p.sigma_eps_slow)
        expected = (p.gamma + 1.0) / (1.0 + p.gamma * p.alpha * s)
        assert fixed_point(MapKind.REDUCED1D, p) == pytest.approx(expected, rel=1e-10)

    def test_3d_memory_invariance(self):
        fp1 = fixed_point(MapKind.SKELETON3D, TABLE1.with_(omega=0.2))
        fp2 = fixed_point(MapKind.SKELETON3D, TABLE1.with_(omega=0.8))
        assert fp1.lam == pytest.approx(fp2.lam, rel=1e-9)


class TestJacobian:
    def test_one_null_eigenvalue_at_fixed_point(self):
        p = TABLE1.with_(omega=0.6)
        fp = fixed_point(MapKind.SKELETON3D, p)
        ev = jacobian(MapKind.SKELETON3D, fp, p)
        null = np.abs(ev) < 1e-6
        assert int(null.sum()) == 1

    def test_sign_structure_above_flip(self):
        # just above the first period-doubling the two live eigenvalues sit
        # inside the unit circle, one positive and one negative
        p = CASCADE.with_(omega=0.3)
        fp = fixed_point(MapKind.SKELETON3D, p)
        ev = jacobian(MapKind.SKELETON3D, fp, p)
        live = ev[np.abs(ev) > 1e-6]
        assert live.shape[0] == 2
        assert np.all(np.abs(live) < 1.0)
        assert np.sum(live.real > 0) == 1
        assert np.sum(live.real < 0) == 1

    def test_reduced_returns_scalar_derivative(self):
        p = TABLE1.with_(omega=0.4, sigma_eps_slow=0.005**2)
        lam = fixed_point(MapKind.REDUCED1D, p)
        ev = jacobian(MapKind.REDUCED1D, lam, p)
        assert ev.shape == (1, 1) or ev.shape == (1,)
        assert float(np.ravel(ev)[0]) == pytest.approx(map_1d_derivative(lam, p), rel=1e-10)

    def test_step_too_large_guard(self):
        p = TABLE1.with_(omega=0.6)
        fp = fixed_point(MapKind.SKELETON3D, p)
        with pytest.raises(StepTooLarge):
            jacobian(MapKind.SKELETON3D, fp, p, rel_step=0.8)


class TestIgarch:
    def test_self_consistent_zero_shock(self):
        # pick sigma, derive lam and the return making the expectation
        # update reproduce itself under a zero shock
        p = TABLE1.with_(omega=0.9, gamma=40.0)
        sigma = 0.05
        lam = 1.0 / (p.alpha * sigma)
        phi = (lam - 1.0) / p.gamma
        state = IgarchState(lam=lam, sigma2=sigma**2, r=sigma / phi, bank=None)
        nxt, flags = igarch_step(state, p, shock=0.0)
        assert not flags
        assert nxt.lam == pytest.approx(lam, rel=1e-12)
        assert nxt.sigma2 == pytest.approx(sigma**2, rel=1e-12)

    def test_full_memory_freezes_variance(self):
        p = TABLE1.with_(omega=1.0, gamma=40.0, n=1)
        state = IgarchState.initial(p, with_bank=False)
        lam0, sig0 = state.lam, state.sigma2
        g = np.random.Generator(np.random.Philox(key=2))
        rs = []
        for _ in range(50):
            state, _ = igarch_step(state, p, float(g.standard_normal() * 0.02))
            rs.append(state.r)
            assert state.sigma2 == sig0
            assert state.lam == lam0
        # returns follow a pure AR(1) with coefficient (lam0-1)/gamma
        phi = (lam0 - 1.0) / p.gamma
        rs = np.array(rs)
        implied = rs[1:] - phi * rs[:-1]
        assert np.all(np.abs(implied) < 0.1)  # shocks only, no blowup

    def test_leverage_floor(self):
        p = TABLE1.with_(omega=0.0, gamma=40.0, n=1, sigma_eps_slow=0.05)
        state = IgarchState(lam=2.0, sigma2=0.05, r=0.0, bank=None)
        nxt, _ = igarch_step(state, p, shock=5.0)   # huge realized variance
        assert nxt.lam == 1.0
