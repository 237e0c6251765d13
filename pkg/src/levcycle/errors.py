"""Exception types and domain-exit markers shared across the package."""


class LevcycleError(Exception):
    """Base class for all package errors."""


class ConfigError(LevcycleError):
    """Invalid configuration file or parameter set."""


class NoRootInBracket(LevcycleError):
    """The leverage equation has no sign change in its feasibility bracket."""


class NonPositiveRisk(LevcycleError):
    """Diversifiable variance must be strictly positive."""


class VarInfeasible(LevcycleError):
    """Leverage too high for the perceived systematic risk: 1/(alpha*lam)^2 <= sigma_u."""


class DegenerateWindow(LevcycleError):
    """All lagged returns vanish; the autoregressive estimator is undefined."""


class NonStationary(LevcycleError):
    """An autoregressive mode has |coefficient| >= 1; aggregation formulas diverge."""


class SingularLikelihood(LevcycleError):
    """Sufficient statistics are rank-deficient; the likelihood has no interior maximum."""


class InsolventBank(LevcycleError):
    """Equity wiped out (E <= 0); the trajectory halts at this event."""


class NoFixedPointInDomain(LevcycleError):
    """No self-consistent state exists inside the stationary domain."""


class NoBifurcationInRange(LevcycleError):
    """No eigenvalue crosses -1 anywhere in the scanned memory range."""


class StepTooLarge(LevcycleError):
    """Finite-difference consistency check failed; derivative estimate unreliable."""


class AlwaysStationary(LevcycleError):
    """Orbits stay inside the domain for every memory value scanned."""


class NeverStationary(LevcycleError):
    """Orbits leave the domain even at the largest memory value scanned."""


class NotApplicable(LevcycleError):
    """Perturbation analysis is undefined on a chaotic skeleton (positive Lyapunov exponent)."""
