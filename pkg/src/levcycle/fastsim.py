"""Fast-scale return process, rebalancing demand and balance-sheet evolution.

Within one decision period the return vector follows
r_s = eps_s + Phi r_{s-1/n} with exogenous component
eps_{i,s} = mu1 + f_s + noise_{i,s}. The window carries its own start
vector so estimators can form lagged products across window boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .core import PhiMatrix, SlowState, build_phi
from .errors import InsolventBank
from .modes import mode_basis
from .params import ModelParams


@dataclass(frozen=True)
class ReturnWindow:
    """One decision period of fast returns.

    returns : (n, M) observed returns r_{t-1+k/n}, k = 1..n
    endo    : (n, M) endogenous impact components e_s = Phi r_s
    exo     : (n, M) exogenous components (factor + idiosyncratic noise)
    factor  : (n,)  common factor draws
    start   : (M,)  return at the window's first lag (previous window's last)
    phi     : impact matrix in force during the window

    Invariant: returns[k] = exo[k] + endo[k-1], with endo[-1] = Phi @ start.
    """

    returns: np.ndarray
    endo: np.ndarray
    exo: np.ndarray
    factor: np.ndarray
    start: np.ndarray
    phi: PhiMatrix

    @property
    def n(self) -> int:
        return self.returns.shape[0]

    @property
    def M(self) -> int:
        return self.returns.shape[1]


def simulate_window(state: SlowState, p: ModelParams, rng: np.random.Generator,
                    start: np.ndarray | None = None) -> ReturnWindow:
    """Simulate the n fast steps of one decision period.

    The recursion runs in the two-mode eigenbasis, where it splits into M
    independent AR(1) filters. Identical (seed, state, start) give
    bit-identical windows. A non-stationary impact matrix is allowed; the
    caller monitors divergence.
    """
    n, M = p.n, p.M
    phi = build_phi(state.lam, state.m, p)
    if start is None:
        start = np.zeros(M)
    start = np.asarray(start, dtype=float)

    f = rng.standard_normal(n) * np.sqrt(p.sigma_f_fast)
    noise = rng.standard_normal((n, M)) * np.sqrt(p.sigma_eps_fast)
    exo = p.mu1 + f[:, None] + noise

    Q = mode_basis(M)
    coeffs = np.empty(M)
    coeffs[0] = phi.market_eigenvalue
    coeffs[1:] = phi.idio_eigenvalue
    H = exo @ Q
    y0 = start @ Q
    Y = np.empty_like(H)
    for j in range(M):
        cj = coeffs[j]
        Y[:, j] = lfilter([1.0], [1.0, -cj], H[:, j], zi=np.array([cj * y0[j]]))[0]
    returns = Y @ Q.T
    endo = returns @ phi.dense().T
    return ReturnWindow(returns=returns, endo=endo, exo=exo, factor=f,
                        start=start, phi=phi)


@dataclass(frozen=True)
class BankState:
    """Balance sheet of one (representative) bank.

    A = E + L holds by construction; rp is the portfolio return realized
    in the most recent fast step.
    """

    A: float
    E: float
    L: float
    rp: float = 0.0

    @classmethod
    def initial(cls, p: ModelParams) -> "BankState":
        return cls(A=p.A0, E=p.E0, L=p.A0 - p.E0)

    @property
    def leverage(self) -> float:
        return self.A / self.E


def rebalance_demand(bank: BankState, lambda_target: float, rp: float) -> float:
    """Asset purchase needed to restore target leverage after a return rp.

    Profit rp*A on the pre-return desired position moves both assets and
    equity; the gap to the new desired size is (lambda-1)*A*rp.
    """
    return (lambda_target - 1.0) * bank.A * rp


def update_balance_sheet(bank: BankState, lambda_target: float, rp: float) -> BankState:
    """One mark-to-market plus rebalancing step.

    Equity absorbs the portfolio profit/loss; assets snap to the target
    leverage; liabilities make up the difference.
    """
    E = bank.E + rp * bank.A
    if E <= 0.0:
        raise InsolventBank(f"equity {E:g} <= 0 after return {rp:g}")
    A = lambda_target * E
    return BankState(A=A, E=E, L=A - E, rp=rp)
