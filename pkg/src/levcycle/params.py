"""Exogenous model parameters.

All constants of the model live in one validated, immutable record. The
variance parameters are stated at the slow scale (one decision period);
fast-scale noise variances are derived as sigma_eps_slow/n and
sigma_f_slow/n so that the slow-scale aggregates stay fixed as the
rebalancing frequency n varies.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError


@dataclass(frozen=True)
class ModelParams:
    """Exogenous constants of the banking system.

    M, N        : number of risky assets / number of banks
    nim         : net interest margin (mu - r_L) per decision period
    gamma       : asset liquidity; price impact scales as 1/gamma
    sigma_eps_slow : idiosyncratic noise variance at the slow scale
    sigma_f_slow   : systematic factor variance at the slow scale
    c           : diversification cost per asset, fraction of equity
    alpha       : VaR quantile multiplier (1.64 for a 5% loss probability
                  under Gaussian returns)
    omega       : memory of the adaptive risk expectations, in [0, 1]
    n           : portfolio rebalancings per decision period (>= 1)
    A0, E0      : initial asset size and equity of each bank
    mu1         : drift of the fast exogenous return component (default 0;
                  estimators assume centered returns)
    """

    M: int = 60
    N: int = 30
    nim: float = 0.08
    gamma: float = 100.0
    sigma_eps_slow: float = 0.03**2
    sigma_f_slow: float = (0.1 * 0.03) ** 2
    c: float = 0.1
    alpha: float = 1.64
    omega: float = 0.5
    n: int = 25
    A0: float = 100.0
    E0: float = 10.0
    mu1: float = 0.0

    def __post_init__(self):
        checks = [
            (self.M >= 1, "M >= 1"),
            (self.N >= 1, "N >= 1"),
            (self.nim > 0, "nim > 0"),
            (self.gamma > 0, "gamma > 0"),
            (self.sigma_eps_slow > 0, "sigma_eps_slow > 0"),
            (self.sigma_f_slow >= 0, "sigma_f_slow >= 0"),
            (0.0 <= self.c <= 1.0, "c in [0, 1]"),
            (self.alpha > 0, "alpha > 0"),
            (0.0 <= self.omega <= 1.0, "omega in [0, 1]"),
            (self.n >= 1, "n >= 1"),
            (self.A0 > 0, "A0 > 0"),
            (self.E0 > 0, "E0 > 0"),
        ]
        bad = [name for ok, name in checks if not ok]
        if bad:
            raise ConfigError("parameter constraints violated: " + ", ".join(bad))

    @property
    def sigma_eps_fast(self) -> float:
        """Per-rebalancing idiosyncratic noise variance."""
        return self.sigma_eps_slow / self.n

    @property
    def sigma_f_fast(self) -> float:
        """Per-rebalancing factor variance."""
        return self.sigma_f_slow / self.n

    @property
    def lambda_max(self) -> float:
        """Upper edge of the stationary leverage domain, gamma + 1."""
        return self.gamma + 1.0

    def with_(self, **kwargs) -> "ModelParams":
        """Copy with some fields replaced (validation re-runs)."""
        return replace(self, **kwargs)


#: Baseline parameter set used throughout the analyses: 60 assets, 30 banks,
#: 8% net interest margin, liquidity 100, 3% idiosyncratic volatility per
#: decision period, factor-to-idiosyncratic volatility ratio 0.1,
#: 10% diversification cost, VaR multiplier 1.64.
TABLE1 = ModelParams()
