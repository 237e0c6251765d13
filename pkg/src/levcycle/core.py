"""Portfolio optimization of a VaR-constrained bank and the price-impact matrix.

Each bank maximizes lam*nim - c*m subject to the binding VaR constraint
alpha*sigma_p*lam = 1, with portfolio variance sigma_p^2 = sigma_d/m + sigma_u.
Eliminating m leaves one scalar equation for the leverage,

    sigma_d^(1/3) * (alpha^(2/3) * (nim/(2c))^(1/3) * lam)^(-1)
        - (1/(alpha*lam)^2 - sigma_u)^(2/3) = 0,

which has exactly one positive root on (0, 1/(alpha*sqrt(sigma_u))).
Multiplying by lam^(4/3) turns the left-hand side into a strictly
increasing function of lam, so bisection is unconditionally convergent
and Newton refinement is safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveRisk, NoRootInBracket, VarInfeasible
from .params import ModelParams

#: relative residual demanded of the leverage solver
LEVERAGE_TOL = 1e-12


@dataclass(frozen=True)
class SlowState:
    """Slow variables of one decision period.

    lam      : financial leverage, assets over equity
    sigma_d  : expected diversifiable variance (slow scale)
    sigma_u  : expected systematic variance (slow scale)
    m        : optimal diversification, real-valued
    """

    lam: float
    sigma_d: float
    sigma_u: float
    m: float

    @classmethod
    def from_expectations(cls, lam: float, sigma_d: float, sigma_u: float,
                          p: ModelParams) -> "SlowState":
        m = optimal_diversification(lam, sigma_d, sigma_u, p.alpha)
        return cls(lam, sigma_d, sigma_u, m)

    @property
    def excess_leverage(self) -> float:
        return self.lam - 1.0

    def domain_flags(self, p: ModelParams) -> frozenset[str]:
        """Names of the domain conditions this state violates (empty = interior)."""
        flags = set()
        if self.lam < 1.0:
            flags.add("lambda_low")
        if self.lam >= p.lambda_max:
            flags.add("lambda_high")
        if self.m <= 0.0:
            flags.add("m_low")
        if self.m > p.M:
            flags.add("m_high")
        if self.sigma_d <= 0.0:
            flags.add("sigma_d_nonpositive")
        if 1.0 / (p.alpha * self.lam) ** 2 - max(self.sigma_u, 0.0) <= 0.0:
            flags.add("var_infeasible")
        return frozenset(flags)


def solve_leverage(sigma_d: float, sigma_u: float, p: ModelParams,
                   x0: float | None = None) -> float:
    """Unique positive leverage solving the first-order condition.

    Bracketed bisection on the monotone transform, then Newton steps to
    machine-level residual. `x0`, when given, seeds Newton directly and
    falls back to bisection if the iterates leave the bracket.
    """
    if sigma_d <= 0.0:
        raise NonPositiveRisk(f"sigma_d={sigma_d!r} must be > 0")
    if p.c == 0.0:
        # free diversification degenerates the objective: no interior optimum
        raise NoRootInBracket("diversification cost c = 0 leaves no interior root")
    if sigma_u < 0.0:
        sigma_u = 0.0
    a2 = p.alpha * p.alpha
    c1 = sigma_d ** (1.0 / 3.0) / (p.alpha ** (2.0 / 3.0) * (p.nim / (2.0 * p.c)) ** (1.0 / 3.0))
    inv_a2 = 1.0 / a2

    # g(lam) = c1*lam^(1/3) - (1/alpha^2 - sigma_u*lam^2)^(2/3), increasing in lam
    def g(lam: float) -> float:
        q = inv_a2 - sigma_u * lam * lam
        return c1 * lam ** (1.0 / 3.0) - (q if q > 0.0 else 0.0) ** (2.0 / 3.0)

    def gprime(lam: float) -> float:
        q = inv_a2 - sigma_u * lam * lam
        d = c1 / (3.0 * lam ** (2.0 / 3.0))
        if q > 0.0:
            d += (4.0 / 3.0) * sigma_u * lam * q ** (-1.0 / 3.0)
        return d

    eps = 1e-12
    if sigma_u > 0.0:
        hi = (1.0 - 1e-14) / (p.alpha * math.sqrt(sigma_u))
    else:
        # closed form is exact at sigma_u = 0; keep a bracket around it anyway
        hi = 4.0 * p.nim / (2.0 * p.c * a2 * sigma_d) + 1.0
    lo = eps
    if g(lo) > 0.0 or g(hi) < 0.0:
        raise NoRootInBracket(
            f"no sign change on ({lo:g}, {hi:g}) for sigma_d={sigma_d:g}, sigma_u={sigma_u:g}")

    lam = x0 if (x0 is not None and lo < x0 < hi) else None
    if lam is None:
        # coarse bisection to get Newton into its basin
        a, b = lo, hi
        for _ in range(40):
            mid = 0.5 * (a + b)
            if g(mid) < 0.0:
                a = mid
            else:
                b = mid
        lam = 0.5 * (a + b)
    for _ in range(60):
        gv = g(lam)
        step = gv / gprime(lam)
        nxt = lam - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lam + (lo if gv > 0.0 else hi))
        if abs(nxt - lam) <= 1e-16 * lam:
            lam = nxt
            break
        lam = nxt
    if _residual(lam, sigma_d, sigma_u, p) > 1e-10:
        # pathological conditioning; fall back to exhaustive bisection
        a, b = lo, hi
        for _ in range(200):
            mid = 0.5 * (a + b)
            if g(mid) < 0.0:
                a = mid
            else:
                b = mid
        lam = 0.5 * (a + b)
    return lam


def _residual(lam: float, sigma_d: float, sigma_u: float, p: ModelParams) -> float:
    """Relative residual of the first-order condition at lam."""
    t1 = sigma_d ** (1.0 / 3.0) / (p.alpha ** (2.0 / 3.0)
                                   * (p.nim / (2.0 * p.c)) ** (1.0 / 3.0) * lam)
    q = 1.0 / (p.alpha * lam) ** 2 - sigma_u
    t2 = (q if q > 0.0 else 0.0) ** (2.0 / 3.0)
    scale = max(abs(t1), abs(t2), 1e-300)
    return abs(t1 - t2) / scale


def leverage_residual(lam: float, sigma_d: float, sigma_u: float, p: ModelParams) -> float:
    """Public access to the solver's relative residual (diagnostics, tests)."""
    return _residual(lam, sigma_d, sigma_u, p)


def leverage_closed_form_no_systematic(sigma_d: float, p: ModelParams) -> float:
    """Exact leverage when systematic risk is zero: nim / (2 c alpha^2 sigma_d)."""
    return p.nim / (2.0 * p.c * p.alpha ** 2 * sigma_d)


def optimal_diversification(lam: float, sigma_d: float, sigma_u: float,
                            alpha: float) -> float:
    """Portfolio size making the VaR constraint bind at leverage lam.

    m = sigma_d / (1/(alpha*lam)^2 - sigma_u); diverges as lam approaches
    the systematic-risk bound 1/(alpha*sqrt(sigma_u)).
    """
    den = 1.0 / (alpha * lam) ** 2 - sigma_u
    if den <= 0.0:
        raise VarInfeasible(
            f"1/(alpha*lam)^2 - sigma_u = {den:g} <= 0 at lam={lam:g}")
    return sigma_d / den


def portfolio_variance(sigma_d: float, sigma_u: float, m: float) -> float:
    """Expected variance of an equally weighted m-asset portfolio."""
    if m <= 0.0:
        raise VarInfeasible(f"m={m!r} must be > 0")
    return sigma_d / m + sigma_u


@dataclass(frozen=True)
class PhiMatrix:
    """Symmetric price-impact matrix of the return autoregression.

    diag    = (lam-1)/(gamma*m) on the diagonal,
    offdiag = diag*(m-1)/(M-1) elsewhere (0 when M == 1).
    Eigenvalues: the uniform (market) mode diag+(M-1)*offdiag = (lam-1)/gamma,
    and M-1 idiosyncratic modes at diag-offdiag.
    """

    diag: float
    offdiag: float
    dim: int

    @property
    def market_eigenvalue(self) -> float:
        return self.diag + (self.dim - 1) * self.offdiag

    @property
    def idio_eigenvalue(self) -> float:
        return self.diag - self.offdiag

    @property
    def largest_eigenvalue(self) -> float:
        return max(self.market_eigenvalue, self.idio_eigenvalue)

    @property
    def stationary(self) -> bool:
        return max(abs(self.market_eigenvalue), abs(self.idio_eigenvalue)) < 1.0

    def dense(self) -> np.ndarray:
        out = np.full((self.dim, self.dim), self.offdiag)
        np.fill_diagonal(out, self.diag)
        return out


def build_phi(lam: float, m: float, p: ModelParams) -> PhiMatrix:
    """Price-impact matrix for target leverage lam and diversification m.

    The M = 1 degeneracy keeps only the scalar (lam-1)/gamma.
    """
    if p.M == 1:
        return PhiMatrix(diag=(lam - 1.0) / p.gamma, offdiag=0.0, dim=1)
    diag = (lam - 1.0) / (p.gamma * m)
    offdiag = diag * (m - 1.0) / (p.M - 1.0)
    return PhiMatrix(diag=diag, offdiag=offdiag, dim=p.M)
