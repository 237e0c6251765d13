"""Deterministic maps of the slow variables.

Three kinds:
  * SKELETON3D - the full (lam, sigma_d, sigma_u) map obtained when the
    risk estimators are replaced by their n -> infinity limits;
  * REDUCED1D  - the one-bank/one-asset reduction, a scalar map of lam;
  * IGARCH     - the single-time-scale (n = 1) variant where the variance
    expectation is updated with every realized squared return.

One decision step, in order: (i) the window's impact feedback is the
previous period's (lam, m); (ii) expectations update by EWMA toward the
limiting estimates; (iii) the new leverage clears the portfolio problem
at the updated expectations. Ordered this way, the leverage row of the
Jacobian is a combination of the expectation rows, so one eigenvalue is
identically zero - the fingerprint of the expectation-feedback coupling.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import SlowState, optimal_diversification, solve_leverage
from .errors import (InsolventBank, NoFixedPointInDomain, NonStationary,
                     StepTooLarge, VarInfeasible)
from .fastsim import BankState, update_balance_sheet
from .params import ModelParams
from .risk import asymptotic_covariance, ewma_update


class MapKind(enum.Enum):
    SKELETON3D = "skeleton3d"
    REDUCED1D = "reduced1d"
    IGARCH = "igarch"


# ---------------------------------------------------------------------------
# 3D skeleton


def skeleton_step(state: SlowState, p: ModelParams) -> tuple[SlowState, frozenset[str]]:
    """One decision period of the deterministic skeleton.

    Returns the new state together with its domain flags (empty when the
    orbit stays interior). Raises only if the step is not computable at
    all (VaR infeasibility at the incoming state, vanishing bracket).
    """
    sigma_d_lim, sigma_u_lim = asymptotic_covariance(state.lam, state.m, p)
    sd = ewma_update(state.sigma_d, sigma_d_lim, p.omega)
    su = ewma_update(state.sigma_u, sigma_u_lim, p.omega)
    lam = solve_leverage(sd, su, p, x0=state.lam)
    new = SlowState.from_expectations(lam, sd, su, p)
    return new, new.domain_flags(p)


def consistent_start(p: ModelParams) -> SlowState:
    """Deterministic in-domain start: exogenous variances, cleared leverage.

    The cleared leverage can exceed the stationary domain when exogenous
    risk is small; it is then pulled to the domain midpoint.
    """
    lam = solve_leverage(p.sigma_eps_slow, p.sigma_f_slow, p)
    if lam >= p.lambda_max:
        lam = 0.5 * (1.0 + p.lambda_max)
    return SlowState.from_expectations(lam, p.sigma_eps_slow, p.sigma_f_slow, p)


def iterate_skeleton(state: SlowState, p: ModelParams, steps: int,
                     clamp: bool = False):
    """Iterate the skeleton, collecting states and domain-exit events.

    Without clamping, iteration halts at the first exit (the exit itself
    is the diagnostic). With clamping, leverage is pinned just inside the
    stationary boundary and iteration continues; every clamped step is
    recorded.
    """
    states: list[SlowState] = [state]
    events: list[tuple[int, str]] = []
    s = state
    for t in range(steps):
        try:
            s, flags = skeleton_step(s, p)
        except (VarInfeasible, NonStationary) as exc:
            events.append((t, type(exc).__name__))
            break
        if flags:
            events.append((t, ",".join(sorted(flags))))
            if not clamp:
                states.append(s)
                break
            lam = min(max(s.lam, 1.0), p.lambda_max - 1e-9)
            try:
                m = optimal_diversification(lam, s.sigma_d, max(s.sigma_u, 0.0),
                                            p.alpha)
            except VarInfeasible:
                # perceived risk admits no consistent portfolio; continue
                # fully diversified until expectations decay back (at the
                # lam = 1 floor the covariance limit ignores m anyway)
                m = float(p.M)
            s = SlowState(lam, s.sigma_d, s.sigma_u, m)
        states.append(s)
    return states, events


# ---------------------------------------------------------------------------
# 1D reduced map


def map_1d(lam: float, p: ModelParams) -> float:
    """One-dimensional leverage map of the single-asset reduction.

    f(lam) = (omega/lam^2 + (1-omega) alpha^2 Sigma_eps/(1-phi)^2)^(-1/2)
    with phi = (lam-1)/gamma. The bracketed factor is the limiting
    aggregated variance of the impacted return process.
    """
    phi = (lam - 1.0) / p.gamma
    v = p.sigma_eps_slow / (1.0 - phi) ** 2
    return (p.omega / (lam * lam) + (1.0 - p.omega) * p.alpha**2 * v) ** -0.5


def map_1d_derivative(lam: float, p: ModelParams) -> float:
    """Analytic f'(lam) of the one-dimensional map."""
    phi = (lam - 1.0) / p.gamma
    h = p.omega / (lam * lam) + (1.0 - p.omega) * p.alpha**2 * p.sigma_eps_slow / (1.0 - phi) ** 2
    hp = -2.0 * p.omega / lam**3 \
        + 2.0 * (1.0 - p.omega) * p.alpha**2 * p.sigma_eps_slow / (p.gamma * (1.0 - phi) ** 3)
    return -0.5 * hp * h**-1.5


def fixed_point_1d(p: ModelParams) -> float:
    """Fixed point of the 1D map by bisection on f(lam) - lam.

    The value is independent of omega: at the fixed point the EWMA weights
    cancel, leaving 1/lam = alpha sqrt(Sigma_eps)/(1-phi).
    """
    lo, hi = 1.0, p.lambda_max - 1e-9
    f = lambda x: map_1d(x, p) - x
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if flo * fhi > 0.0:
        raise NoFixedPointInDomain(
            f"f(lam)-lam has no sign change on [{lo:g}, {hi:g}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) * flo > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    lam = 0.5 * (lo + hi)
    if abs(map_1d(lam, p) - lam) > 1e-10 * lam:
        raise NoFixedPointInDomain("bisection stalled before reaching tolerance")
    return lam


# ---------------------------------------------------------------------------
# fixed points and Jacobians, kind-dispatched


def fixed_point(kind: MapKind, p: ModelParams):
    """Self-consistent state of the chosen map (REDUCED1D returns a float).

    Fixed points do not depend on omega, so the 3D search iterates the map
    at omega = 0.9, where the fixed point attracts geometrically whenever
    it exists, then verifies the step residual at the requested omega.
    """
    if kind is MapKind.REDUCED1D:
        return fixed_point_1d(p)
    if kind is not MapKind.SKELETON3D:
        raise ValueError(f"no fixed-point routine for {kind}")

    # clamped iteration is robust to boundary overshoot during the
    # transient; the candidate is then verified against the raw map
    relaxed = p.with_(omega=0.9)
    states, _ = iterate_skeleton(consistent_start(relaxed), relaxed, 6000,
                                 clamp=True)
    if len(states) < 6001:
        raise NoFixedPointInDomain("clamped iteration terminated early")
    s = states[-1]
    try:
        nxt, flags = skeleton_step(s, p)
    except (VarInfeasible, NonStationary, InsolventBank) as exc:
        raise NoFixedPointInDomain(str(exc)) from exc
    res = max(abs(nxt.lam - s.lam) / max(s.lam, 1.0),
              abs(nxt.sigma_d - s.sigma_d) / s.sigma_d,
              abs(nxt.sigma_u - s.sigma_u) / max(abs(s.sigma_u), s.sigma_d))
    if res > 1e-10 or flags:
        raise NoFixedPointInDomain(f"relative step residual {res:g} at the candidate point")
    return s


def _state_vec(s: SlowState) -> np.ndarray:
    return np.array([s.lam, s.sigma_d, s.sigma_u])


def _vec_state(v: np.ndarray, p: ModelParams) -> SlowState:
    return SlowState.from_expectations(float(v[0]), float(v[1]), float(v[2]), p)


def jacobian_matrix(kind: MapKind, state, p: ModelParams,
                    rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of one map step.

    A two-scale consistency check (h vs h/2, Richardson-style) guards
    against steps too large for the local curvature.
    """
    if kind is MapKind.REDUCED1D:
        return np.array([[map_1d_derivative(float(state), p)]])
    if kind is not MapKind.SKELETON3D:
        raise ValueError(f"no Jacobian for {kind}")
    x = _state_vec(state)

    def column(j: int, h: float) -> np.ndarray:
        xp = x.copy(); xp[j] += h
        xm = x.copy(); xm[j] -= h
        try:
            sp, _ = skeleton_step(_vec_state(xp, p), p)
            sm, _ = skeleton_step(_vec_state(xm, p), p)
        except (VarInfeasible, NonStationary) as exc:
            raise StepTooLarge(f"probe left the feasible domain: {exc}") from exc
        return (_state_vec(sp) - _state_vec(sm)) / (2.0 * h)

    J = np.empty((3, 3))
    for j in range(3):
        h = rel_step * max(abs(x[j]), 1e-14)
        cj = column(j, h)
        cj2 = column(j, 0.5 * h)
        scale = np.max(np.abs(cj2)) + 1e-12
        if np.max(np.abs(cj - cj2)) > 1e-2 * scale + 1e-9:
            raise StepTooLarge(
                f"finite-difference columns at h and h/2 disagree (coordinate {j})")
        J[:, j] = cj2
    return J


def jacobian(kind: MapKind, state, p: ModelParams, rel_step: float = 1e-6) -> np.ndarray:
    """Eigenvalues of the step Jacobian, sorted by decreasing modulus.

    For REDUCED1D this is the single value f'(lam).
    """
    J = jacobian_matrix(kind, state, p, rel_step)
    ev = np.linalg.eigvals(J)
    return ev[np.argsort(-np.abs(ev))]


# ---------------------------------------------------------------------------
# single-time-scale (n = 1) variant


@dataclass(frozen=True)
class IgarchState:
    """State of the n = 1 system: leverage, variance expectation, last return."""

    lam: float
    sigma2: float
    r: float
    bank: BankState | None = None

    @classmethod
    def initial(cls, p: ModelParams, with_bank: bool = True) -> "IgarchState":
        sigma2 = p.sigma_eps_slow
        lam = max(1.0 / (p.alpha * math.sqrt(sigma2)), 1.0)
        return cls(lam=lam, sigma2=sigma2, r=0.0,
                   bank=BankState.initial(p) if with_bank else None)


def igarch_step(state: IgarchState, p: ModelParams,
                shock: float) -> tuple[IgarchState, frozenset[str]]:
    """One joint update of return, variance expectation, leverage, balance sheet.

    r_t = mu1 + shock + phi r_{t-1} with phi = (lam-1)/gamma;
    sigma_t^2 = omega sigma^2 + (1-omega) (r_t - mu1)^2 (returns centered
    before squaring, as the estimators assume); lam_t = 1/(alpha sigma_t),
    floored at 1 (no short leverage). Leverage beyond the stationary bound
    gamma+1 is flagged but not clamped: the burst inflates realized
    variance, which pulls leverage back down by itself.
    """
    phi = (state.lam - 1.0) / p.gamma
    r = p.mu1 + shock + phi * state.r
    centered = r - p.mu1
    sigma2 = ewma_update(state.sigma2, centered * centered, p.omega)
    lam = max(1.0 / (p.alpha * math.sqrt(sigma2)), 1.0)
    flags = set()
    if lam >= p.lambda_max:
        flags.add("lambda_high")
    bank = state.bank
    if bank is not None:
        bank = update_balance_sheet(bank, lam, r)  # may raise InsolventBank
    return IgarchState(lam=lam, sigma2=sigma2, r=r, bank=bank), frozenset(flags)
