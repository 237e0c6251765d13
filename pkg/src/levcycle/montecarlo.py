"""Stochastic slow-fast simulation at finite n, and seed ensembles.

Three kinds mirror the deterministic maps: the full multivariate system,
the one-bank/one-asset reduction, and the single-time-scale (n = 1)
variant. Each trajectory owns one counter-based Philox stream keyed by
its seed; identical (params, T, seed) give bit-identical records.

Domain handling: slow-fast kinds record leverage boundary hits and clamp
just inside [1, gamma+1) so that sweeps across unstable regions keep
finite statistics; the n = 1 kind records the hit without clamping (its
bursts self-limit).

The leverage recursion of every kind is autonomous of the balance sheet,
so a bank insolvency is recorded as an event and freezes the ledger (NaN
from then on) while the leverage path continues; amplitude statistics
stay defined across parameter regions where ruin is almost sure.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .analysis import amplitude_stats
from .core import SlowState, optimal_diversification, solve_leverage
from .errors import InsolventBank, NoRootInBracket, VarInfeasible
from .fastsim import BankState, simulate_window
from .modes import mode_coefficients
from .params import ModelParams
from .risk import aggregate_variance_ar1, estimate_var1_mle, ewma_update, \
    slow_scale_from_modes
from .skeleton import IgarchState, MapKind, igarch_step

_MODE_CLIP = 1.0 - 1e-6


@dataclass
class Trajectory:
    """Per-decision-period records of one stochastic run."""

    kind: MapKind
    seed: int
    T: int                      # periods actually recorded
    lam: np.ndarray             # target leverage after each decision
    sigma_d_exp: np.ndarray | None = None   # expected diversifiable variance
    sigma_u_exp: np.ndarray | None = None   # expected systematic variance
    m: np.ndarray | None = None
    sigma2_exp: np.ndarray | None = None    # 1D / igarch variance expectation
    phi_hat: np.ndarray | None = None
    sig_eps_hat: np.ndarray | None = None
    A: np.ndarray | None = None
    E: np.ndarray | None = None
    L: np.ndarray | None = None
    events: list[tuple[int, str, float]] = field(default_factory=list)
    halted: bool = False

    def post_transient(self, burn_in: int) -> np.ndarray:
        return self.lam[burn_in:]


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def _clamp_lam(lam: float, p: ModelParams, t: int,
               events: list[tuple[int, str, float]]) -> float:
    if lam >= p.lambda_max:
        events.append((t, "domain-exit-high", lam))
        return p.lambda_max - 1e-9
    if lam < 1.0:
        events.append((t, "domain-exit-low", lam))
        return 1.0
    return lam


def _run_reduced(p: ModelParams, T: int, seed: int) -> Trajectory:
    n = p.n
    se_fast = math.sqrt(p.sigma_eps_fast)
    a2 = p.alpha * p.alpha
    rng = _rng(seed)
    events: list[tuple[int, str, float]] = []

    lam = float(rng.uniform(1.0, p.lambda_max - 1e-9))
    bank = BankState(A=p.A0, E=p.A0 / lam, L=p.A0 * (1.0 - 1.0 / lam))
    r_prev = 0.0

    lams = np.empty(T)
    sig2 = np.empty(T)
    phis = np.empty(T)
    ses = np.empty(T)
    Es = np.empty(T)
    As = np.empty(T)
    for t in range(T):
        phi = (lam - 1.0) / p.gamma
        eps = rng.standard_normal(n) * se_fast
        if p.mu1 != 0.0:
            eps = eps + p.mu1
        r = lfilter([1.0], [1.0, -phi], eps, zi=np.array([phi * r_prev]))[0]

        lagged = np.empty(n)
        lagged[0] = r_prev
        lagged[1:] = r[:-1]
        den = float(lagged @ lagged)
        if den == 0.0:
            events.append((t, "degenerate-window", 0.0))
            phi_hat, se2_hat = 0.0, float(r @ r) / n
        else:
            phi_hat = float(lagged @ r) / den
            resid = r - phi_hat * lagged
            se2_hat = float(resid @ resid) / n
        if abs(phi_hat) >= 1.0:
            events.append((t, "estimate-nonstationary", phi_hat))
            phi_hat = math.copysign(_MODE_CLIP, phi_hat)
        vhat = aggregate_variance_ar1(phi_hat, se2_hat, n)

        lam_new = (p.omega / (lam * lam) + (1.0 - p.omega) * a2 * vhat) ** -0.5
        lam_new = _clamp_lam(lam_new, p, t, events)

        if bank is not None:
            growth = 1.0 + lam * r
            if np.any(growth <= 0.0):
                events.append((t, "insolvency", float(bank.E)))
                bank = None
            else:
                E = bank.E * float(np.prod(growth))
                bank = BankState(A=lam_new * E, E=E, L=(lam_new - 1.0) * E,
                                 rp=float(r[-1]))

        lam = lam_new
        r_prev = float(r[-1])
        lams[t] = lam
        sig2[t] = 1.0 / (a2 * lam * lam)
        phis[t] = phi_hat
        ses[t] = se2_hat
        Es[t] = bank.E if bank is not None else math.nan
        As[t] = bank.A if bank is not None else math.nan
    return Trajectory(kind=MapKind.REDUCED1D, seed=seed, T=T,
                      lam=lams, sigma2_exp=sig2, phi_hat=phis,
                      sig_eps_hat=ses, A=As, E=Es,
                      L=As - Es, events=events, halted=False)


def _feasible_initial_lam(p: ModelParams, rng: np.random.Generator,
                          sd0: float, su0: float) -> float:
    """Uniform draw over leverages feasible at the initial expectations."""
    hi = p.lambda_max - 1e-9
    if su0 > 0.0:
        hi = min(hi, (1.0 - 1e-9) / (p.alpha * math.sqrt(su0)))
    for _ in range(64):
        lam = float(rng.uniform(1.0, hi))
        try:
            m = optimal_diversification(lam, sd0, su0, p.alpha)
        except VarInfeasible:
            continue
        if 0.0 < m <= p.M:
            return lam
    return 0.5 * (1.0 + hi)


def _run_multivariate(p: ModelParams, T: int, seed: int) -> Trajectory:
    rng = _rng(seed)
    events: list[tuple[int, str, float]] = []
    sd, su = p.sigma_eps_slow, p.sigma_f_slow
    lam = _feasible_initial_lam(p, rng, sd, su)
    state = SlowState.from_expectations(lam, sd, su, p)
    bank = BankState(A=p.A0, E=p.A0 / lam, L=p.A0 * (1.0 - 1.0 / lam))
    r_prev = np.zeros(p.M)

    lams = np.empty(T)
    sds = np.empty(T)
    sus = np.empty(T)
    ms = np.empty(T)
    Es = np.empty(T)
    As = np.empty(T)
    halted = False
    t_done = 0
    for t in range(T):
        window = simulate_window(state, p, rng, start=r_prev)
        est = estimate_var1_mle(window)
        if est.stationary:
            sd_hat, su_hat = est.sigma_d_hat, est.sigma_u_hat
        else:
            g, d = mode_coefficients(est.phi_hat, est.beta_hat, p.M)
            events.append((t, "estimate-nonstationary", max(abs(g), abs(d))))
            g = max(-_MODE_CLIP, min(_MODE_CLIP, g))
            d = max(-_MODE_CLIP, min(_MODE_CLIP, d))
            sg = est.sig_eps_hat + p.M * est.sig_f_hat
            _, _, sd_hat, su_hat = slow_scale_from_modes(
                g, d, sg, est.sig_eps_hat, p.M, p.n)

        sd_new = ewma_update(state.sigma_d, sd_hat, p.omega)
        su_new = ewma_update(state.sigma_u, su_hat, p.omega)
        try:
            lam_new = solve_leverage(sd_new, su_new, p, x0=state.lam)
        except (NoRootInBracket, VarInfeasible) as exc:
            events.append((t, type(exc).__name__, state.lam))
            halted = True
            break
        lam_new = _clamp_lam(lam_new, p, t, events)
        try:
            m_new = optimal_diversification(lam_new, sd_new, max(su_new, 0.0), p.alpha)
        except VarInfeasible:
            events.append((t, "VarInfeasible", lam_new))
            halted = True
            break
        if m_new > p.M:
            events.append((t, "m-above-M", m_new))

        if bank is not None:
            rp = window.returns.mean(axis=1)    # mean-field portfolio return
            growth = 1.0 + state.lam * rp
            if np.any(growth <= 0.0):
                events.append((t, "insolvency", float(bank.E)))
                bank = None
            else:
                E = bank.E * float(np.prod(growth))
                bank = BankState(A=lam_new * E, E=E, L=(lam_new - 1.0) * E,
                                 rp=float(rp[-1]))

        state = SlowState(lam=lam_new, sigma_d=sd_new, sigma_u=su_new, m=m_new)
        r_prev = window.returns[-1]
        lams[t] = lam_new
        sds[t] = sd_new
        sus[t] = su_new
        ms[t] = m_new
        Es[t] = bank.E if bank is not None else math.nan
        As[t] = bank.A if bank is not None else math.nan
        t_done = t + 1
        if halted:
            break
    sl = slice(0, t_done)
    return Trajectory(kind=MapKind.SKELETON3D, seed=seed, T=t_done,
                      lam=lams[sl], sigma_d_exp=sds[sl], sigma_u_exp=sus[sl],
                      m=ms[sl], A=As[sl], E=Es[sl], L=As[sl] - Es[sl],
                      events=events, halted=halted)


def _run_igarch(p: ModelParams, T: int, seed: int) -> Trajectory:
    rng = _rng(seed)
    events: list[tuple[int, str, float]] = []
    sigma2 = p.sigma_eps_fast
    lam0 = max(1.0 / (p.alpha * math.sqrt(sigma2)), 1.0)
    state = IgarchState(lam=lam0, sigma2=sigma2, r=0.0,
                        bank=BankState(A=p.A0, E=p.A0 / lam0,
                                       L=p.A0 * (1.0 - 1.0 / lam0)))
    shocks = rng.standard_normal(T) * math.sqrt(p.sigma_eps_fast)
    lams = np.empty(T)
    sig2 = np.empty(T)
    Es = np.empty(T)
    As = np.empty(T)
    for t in range(T):
        try:
            state, flags = igarch_step(state, p, float(shocks[t]))
        except InsolventBank:
            events.append((t, "insolvency", float(state.bank.E)))
            state = IgarchState(lam=state.lam, sigma2=state.sigma2,
                                r=state.r, bank=None)
            state, flags = igarch_step(state, p, float(shocks[t]))
        for name in flags:
            events.append((t, name, state.lam))
        lams[t] = state.lam
        sig2[t] = state.sigma2
        Es[t] = state.bank.E if state.bank else math.nan
        As[t] = state.bank.A if state.bank else math.nan
    return Trajectory(kind=MapKind.IGARCH, seed=seed, T=T, lam=lams,
                      sigma2_exp=sig2, A=As, E=Es,
                      L=As - Es, events=events, halted=False)


def run_stochastic(kind: MapKind, p: ModelParams, T: int, seed: int) -> Trajectory:
    """Simulate one trajectory of the chosen stochastic system."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if kind is MapKind.REDUCED1D:
        return _run_reduced(p, T, seed)
    if kind is MapKind.SKELETON3D:
        return _run_multivariate(p, T, seed)
    if kind is MapKind.IGARCH:
        return _run_igarch(p, T, seed)
    raise ValueError(f"unknown kind {kind}")


# ---------------------------------------------------------------------------
# ensembles over seeds


@dataclass
class EnsembleSummary:
    """Cross-seed amplitude statistics of one configuration."""

    kind: MapKind
    T: int
    burn_in: int
    seeds: list[int]
    delta_lambda: np.ndarray     # per seed, order matches `seeds`
    cv: np.ndarray
    failed_seeds: list[int]
    n_events: int

    @property
    def delta_lambda_mean(self) -> float:
        return float(np.mean(self.delta_lambda))

    @property
    def delta_lambda_std(self) -> float:
        return float(np.std(self.delta_lambda))

    @property
    def cv_mean(self) -> float:
        return float(np.mean(self.cv))

    @property
    def cv_std(self) -> float:
        return float(np.std(self.cv))


def _one_seed(args) -> tuple[int, float, float, int, bool]:
    kind, p, T, seed, burn_in = args
    traj = run_stochastic(kind, p, T, seed)
    if traj.T <= burn_in + 100:
        return seed, math.nan, math.nan, len(traj.events), True
    stats = amplitude_stats(traj.post_transient(burn_in))
    return seed, stats.delta_lambda, stats.cv, len(traj.events), False


def default_workers() -> int:
    value = os.environ.get("LEVCYCLE_WORKERS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def ensemble(kind: MapKind, p: ModelParams, T: int, seeds,
             burn_in: int | None = None, workers: int | None = None) -> EnsembleSummary:
    """Amplitude statistics across seeds; deterministic given the seed list.

    Seeds run independently (optionally in a process pool); the summary is
    assembled in seed order so worker scheduling cannot change the result.
    """
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ValueError("need at least 2 seeds")
    if burn_in is None:
        burn_in = max(T // 10, 1)
    if workers is None:
        workers = default_workers()
    jobs = [(kind, p, T, s, burn_in) for s in seeds]
    if workers > 1:
        # pool.map preserves job order, so the merge is seed-ordered already
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_seed, jobs))
    else:
        results = [_one_seed(j) for j in jobs]
    dl = np.array([r[1] for r in results])
    cv = np.array([r[2] for r in results])
    failed = [r[0] for r in results if r[4]]
    ok = ~np.isnan(dl)
    return EnsembleSummary(kind=kind, T=T, burn_in=burn_in, seeds=seeds,
                           delta_lambda=dl[ok], cv=cv[ok], failed_seeds=failed,
                           n_events=sum(r[3] for r in results))
