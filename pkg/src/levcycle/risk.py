"""Risk estimation and aggregation across time scales.

Three layers:
  * maximum-likelihood estimators of the fast autoregression from one
    window (scalar AR(1) and the symmetry-restricted multivariate case);
  * exact aggregation of fast-scale (co)variances to the decision scale,
    Var[sum_k r_{t-1+k/n}];
  * the n -> infinity limits used by the deterministic skeleton, and the
    adaptive-expectations (EWMA) update.

The restricted multivariate likelihood decouples in the two-mode basis
into one market AR(1) and M-1 pooled idiosyncratic AR(1) processes, so
the restricted MLE is available in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWindow, NonStationary, SingularLikelihood
from .fastsim import ReturnWindow
from .modes import entries_from_modes, mode_basis, mode_coefficients, modes_from_entries
from .params import ModelParams


def estimate_ar1(returns: np.ndarray, start: float = 0.0) -> tuple[float, float]:
    """Conditional MLE of (phi, sigma_eps^2) for a scalar AR(1) window.

    phi_hat = sum r_k r_{k-1} / sum r_{k-1}^2 with r_0 = start;
    sigma_hat^2 = mean squared residual.
    """
    r = np.asarray(returns, dtype=float)
    n = r.shape[0]
    if n < 1:
        raise DegenerateWindow("need at least 1 observation")
    lagged = np.empty(n)
    lagged[0] = start
    lagged[1:] = r[:-1]
    den = float(lagged @ lagged)
    if den == 0.0:
        raise DegenerateWindow("all lagged returns are zero")
    phi_hat = float(lagged @ r) / den
    resid = r - phi_hat * lagged
    sig_eps_hat = float(resid @ resid) / n
    return phi_hat, sig_eps_hat


def aggregate_variance_ar1(phi: float, sig_eps: float, n: int) -> float:
    """Exact variance of the n-step aggregated stationary AR(1) return.

    Var[sum r] = (1 + 2 phi (1-phi^n)/(1-phi)
                    - 2 ((n phi - n - 1) phi^(n+1) + phi) / (n (1-phi)^2))
                 * n sig_eps / (1 - phi^2).
    """
    if abs(phi) >= 1.0:
        raise NonStationary(f"|phi|={abs(phi):g} >= 1")
    if phi == 0.0:
        return n * sig_eps
    one = 1.0 - phi
    t1 = 2.0 * phi * (1.0 - phi**n) / one
    t2 = 2.0 * ((n * phi - n - 1.0) * phi ** (n + 1) + phi) / (n * one * one)
    return (1.0 + t1 - t2) * n * sig_eps / (1.0 - phi * phi)


@dataclass(frozen=True)
class CovEstimate:
    """Restricted VAR(1) estimates from one window, plus their slow-scale aggregates."""

    phi_hat: float
    beta_hat: float
    sig_eps_hat: float
    sig_f_hat: float
    theta0_hat: float       # fast-scale return variance
    psi0_hat: float         # fast-scale return covariance
    sigma_d_hat: float      # slow-scale diversifiable variance
    sigma_u_hat: float      # slow-scale systematic variance
    stationary: bool        # both estimated modes inside the unit circle


def _pooled_ar1(Y: np.ndarray, y0: np.ndarray) -> tuple[float, float]:
    """AR(1) MLE pooled over the columns of Y (shared coefficient and variance)."""
    n, k = Y.shape
    lagged = np.empty_like(Y)
    lagged[0] = y0
    lagged[1:] = Y[:-1]
    den = float(np.einsum("ij,ij->", lagged, lagged))
    if den == 0.0:
        raise SingularLikelihood("lagged mode returns are all zero")
    coef = float(np.einsum("ij,ij->", lagged, Y)) / den
    resid = Y - coef * lagged
    var = float(np.einsum("ij,ij->", resid, resid)) / (n * k)
    return coef, var


def estimate_var1_mle(window: ReturnWindow) -> CovEstimate:
    """Restricted maximum likelihood fit of the symmetric VAR(1) window.

    The symmetry restriction (equal diagonal, equal off-diagonal entries of
    both the coefficient matrix and the innovation covariance) makes the
    likelihood separable in the mode basis: the market mode and the pooled
    idiosyncratic modes are independent AR(1) problems, each with the
    standard closed-form MLE. Invariance of the MLE under the smooth
    reparameterization returns (phi, beta, sig_eps, sig_f).
    """
    n, M = window.n, window.M
    if n < 3:
        raise DegenerateWindow("need at least 3 fast steps for the restricted fit")
    if M < 2:
        raise SingularLikelihood("multivariate fit requires M >= 2")
    Q = mode_basis(M)
    Y = window.returns @ Q
    y0 = window.start @ Q
    g_hat, sg_hat = _pooled_ar1(Y[:, :1], y0[:1])
    d_hat, sd_hat = _pooled_ar1(Y[:, 1:], y0[1:])

    phi_hat, beta_hat = entries_from_modes(g_hat, d_hat, M)
    sig_eps_hat = sd_hat
    sig_f_hat = (sg_hat - sd_hat) / M

    stationary = max(abs(g_hat), abs(d_hat)) < 1.0
    if stationary:
        theta0, psi0, sigma_d, sigma_u = slow_scale_from_modes(
            g_hat, d_hat, sg_hat, sd_hat, M, n)
    else:
        theta0 = psi0 = sigma_d = sigma_u = math.nan
    return CovEstimate(phi_hat=phi_hat, beta_hat=beta_hat,
                       sig_eps_hat=sig_eps_hat, sig_f_hat=sig_f_hat,
                       theta0_hat=theta0, psi0_hat=psi0,
                       sigma_d_hat=sigma_d, sigma_u_hat=sigma_u,
                       stationary=stationary)


def slow_scale_from_modes(g: float, d: float, sg: float, sd: float,
                          M: int, n: int) -> tuple[float, float, float, float]:
    """(theta0, psi0, sigma_d, sigma_u) from mode coefficients and
    innovation variances; requires both modes inside the unit circle."""
    vg = sg / (1.0 - g * g)
    vd = sd / (1.0 - d * d)
    theta0, psi0 = entries_from_modes(vg, vd, M)
    phi, beta = entries_from_modes(g, d, M)
    sigma_d, sigma_u = covariance_slow_scale(theta0, psi0, phi, beta, M, n)
    return theta0, psi0, sigma_d, sigma_u


@dataclass(frozen=True)
class AggregationTerms:
    """Autocovariance sums entering the slow-scale aggregation.

    Theta1 = sum_{k=1..n} theta_k, Theta2 = sum k theta_k (variance terms);
    Psi1, Psi2 the same for the cross-covariances. All vanish at
    phi = beta = 0.
    """

    theta0: float
    psi0: float
    Theta1: float
    Psi1: float
    Theta2: float
    Psi2: float


def aggregation_terms(theta0: float, psi0: float, phi: float, beta: float,
                      M: int, n: int) -> AggregationTerms:
    """Solve the two 2x2 linear systems for the lag sums, exactly at finite n.

    With Gamma_k the lag-k return covariance, Gamma_k = Phi Gamma_{k-1}
    gives (I-Phi) S1 = Phi (Gamma_0 - Gamma_n) and
    (I-Phi) S2 = Phi (Gamma_0 + S1 - (n+1) Gamma_n); both reduce to 2x2
    systems in the (diag, offdiag) entries.
    """
    g, d = mode_coefficients(phi, beta, M)
    if max(abs(g), abs(d)) >= 1.0:
        raise NonStationary(f"mode coefficients ({g:g}, {d:g}) not inside the unit circle")
    vg, vd = modes_from_entries(theta0, psi0, M)
    theta_n, psi_n = entries_from_modes(g**n * vg, d**n * vd, M)

    if M == 1:
        # scalar geometric sums, no cross terms
        Theta1 = phi * (theta0 - theta_n) / (1.0 - phi)
        Theta2 = phi * (theta0 + Theta1 - (n + 1) * theta_n) / (1.0 - phi)
        return AggregationTerms(theta0, 0.0, Theta1, 0.0, Theta2, 0.0)

    A = np.array([[1.0 - phi, -beta * (M - 1)],
                  [-beta, 1.0 - (phi + beta * (M - 2))]])

    def impact_product(t: float, s: float) -> np.ndarray:
        # (diag, offdiag) entries of Phi X for X with entries (t, s)
        return np.array([phi * t + beta * (M - 1) * s,
                         beta * t + (phi + beta * (M - 2)) * s])

    Theta1, Psi1 = np.linalg.solve(A, impact_product(theta0 - theta_n, psi0 - psi_n))
    rhs2 = impact_product(theta0 + Theta1 - (n + 1) * theta_n,
                          psi0 + Psi1 - (n + 1) * psi_n)
    Theta2, Psi2 = np.linalg.solve(A, rhs2)
    return AggregationTerms(theta0, psi0, float(Theta1), float(Psi1),
                            float(Theta2), float(Psi2))


def covariance_slow_scale(theta0: float, psi0: float, phi: float, beta: float,
                          M: int, n: int) -> tuple[float, float]:
    """Slow-scale (sigma_d, sigma_u) from fast-scale moments.

    sigma_d = n((theta0-psi0) + 2(Theta1-Psi1) - (2/n)(Theta2-Psi2)),
    sigma_u = n(psi0 + 2 Psi1 - (2/n) Psi2).
    """
    t = aggregation_terms(theta0, psi0, phi, beta, M, n)
    sigma_d = n * ((t.theta0 - t.psi0) + 2.0 * (t.Theta1 - t.Psi1)) \
        - 2.0 * (t.Theta2 - t.Psi2)
    sigma_u = n * (t.psi0 + 2.0 * t.Psi1) - 2.0 * t.Psi2
    return sigma_d, sigma_u


def asymptotic_covariance(lam: float, m: float, p: ModelParams) -> tuple[float, float]:
    """Limit of the slow-scale covariance estimator as n -> infinity.

    Each mode of the aggregated return inherits the (1 - coefficient)^-2
    amplification of its innovation variance:

        sigma_d_tilde = Sigma_eps / (1 - d)^2,
        sigma_u_tilde = [(Sigma_eps + M Sigma_f)/(1-g)^2
                          - Sigma_eps/(1-d)^2] / M,

    with g = (lam-1)/gamma the market mode and d = g (M-m)/(m (M-1)) the
    idiosyncratic mode. At lam = 1 this returns exactly
    (Sigma_eps, Sigma_f).
    """
    if lam >= p.lambda_max:
        raise NonStationary(f"lam={lam:g} >= gamma+1={p.lambda_max:g}")
    if lam == 1.0:
        # zero excess leverage: no endogenous terms, exact passthrough
        return p.sigma_eps_slow, p.sigma_f_slow
    if p.M == 1:
        phi = (lam - 1.0) / p.gamma
        g = d = phi
    else:
        phi = (lam - 1.0) / (p.gamma * m)
        beta = phi * (m - 1.0) / (p.M - 1.0)
        g, d = mode_coefficients(phi, beta, p.M)
    if max(abs(g), abs(d)) >= 1.0:
        raise NonStationary(f"mode coefficients ({g:g}, {d:g}) not inside the unit circle")
    Se, Sf, M = p.sigma_eps_slow, p.sigma_f_slow, p.M
    sigma_d = Se / (1.0 - d) ** 2
    sigma_u = ((Se + M * Sf) / (1.0 - g) ** 2 - sigma_d) / M
    return sigma_d, sigma_u


def ewma_update(prev: float, estimate: float, omega: float) -> float:
    """Adaptive-expectations update: omega*prev + (1-omega)*estimate."""
    return omega * prev + (1.0 - omega) * estimate


def effective_memory(omega: float) -> float:
    """Effective memory tau = 1/ln(1/omega) of the EWMA scheme."""
    if not 0.0 < omega < 1.0:
        raise ValueError(f"omega={omega!r} must be strictly inside (0, 1)")
    return 1.0 / math.log(1.0 / omega)


def rescale_memory(omega_fast: float, n: int) -> float:
    """Memory parameter re-expressed at a time scale n steps coarser.

    A per-step decay omega_fast compounds to omega_fast**n over one
    decision period.
    """
    return omega_fast**n
