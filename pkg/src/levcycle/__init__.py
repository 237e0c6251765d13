"""Leverage cycles of VaR-constrained banks with adaptive risk expectations.

Deterministic slow-fast maps, their stability analytics (bifurcation
cascades, Lyapunov exponents, stationarity boundaries), and stochastic
finite-n Monte Carlo with seeded reproducibility.
"""
from .analysis import (AmplitudeStats, BifurcationDiagram, Envelope,
                       amplitude_stats, bifurcation_sweep, chi2_quantile,
                       find_omega2, find_omega_star, lyapunov,
                       lyapunov_logistic, perturbation_envelope,
                       threshold_sigma)
from .core import (PhiMatrix, SlowState, build_phi,
                   leverage_closed_form_no_systematic, leverage_residual,
                   optimal_diversification, portfolio_variance, solve_leverage)
from .fastsim import (BankState, ReturnWindow, rebalance_demand,
                      simulate_window, update_balance_sheet)
from .montecarlo import EnsembleSummary, Trajectory, ensemble, run_stochastic
from .params import TABLE1, ModelParams
from .risk import (AggregationTerms, CovEstimate, aggregate_variance_ar1,
                   aggregation_terms, asymptotic_covariance,
                   covariance_slow_scale, effective_memory, estimate_ar1,
                   estimate_var1_mle, ewma_update, rescale_memory)
from .skeleton import (IgarchState, MapKind, consistent_start, fixed_point,
                       igarch_step, iterate_skeleton, jacobian,
                       jacobian_matrix, map_1d, map_1d_derivative,
                       skeleton_step)

__version__ = "0.1.0"

__all__ = [
    "AggregationTerms", "AmplitudeStats", "BankState", "BifurcationDiagram",
    "CovEstimate", "EnsembleSummary", "Envelope", "IgarchState", "MapKind",
    "ModelParams", "PhiMatrix", "ReturnWindow", "SlowState", "TABLE1",
    "Trajectory", "aggregate_variance_ar1", "aggregation_terms",
    "amplitude_stats", "asymptotic_covariance", "bifurcation_sweep",
    "build_phi", "chi2_quantile", "consistent_start", "covariance_slow_scale",
    "effective_memory", "ensemble", "estimate_ar1", "estimate_var1_mle",
    "ewma_update", "find_omega2", "find_omega_star", "fixed_point",
    "igarch_step", "iterate_skeleton", "jacobian", "jacobian_matrix",
    "leverage_closed_form_no_systematic", "leverage_residual", "lyapunov",
    "lyapunov_logistic", "map_1d", "map_1d_derivative",
    "optimal_diversification", "perturbation_envelope", "portfolio_variance",
    "rebalance_demand", "rescale_memory", "run_stochastic", "simulate_window",
    "skeleton_step", "solve_leverage", "threshold_sigma",
    "update_balance_sheet",
]
