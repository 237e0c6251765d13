"""Stability analytics over the deterministic maps.

Bifurcation sweeps, largest Lyapunov exponents, the first period-doubling
memory omega2, the stationarity-exit memory omega_star, the
idiosyncratic-variance threshold above which no cycle exists, the
finite-n perturbation envelope of leverage, and amplitude statistics of
simulated leverage paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_discrete_lyapunov
from scipy.special import gammaincinv

from .core import SlowState, solve_leverage
from .errors import (AlwaysStationary, LevcycleError, NeverStationary,
                     NoBifurcationInRange, NotApplicable)
from .modes import mode_coefficients
from .params import ModelParams
from .risk import (aggregate_variance_ar1, asymptotic_covariance,
                   covariance_slow_scale, ewma_update)
from .skeleton import (MapKind, consistent_start, fixed_point, iterate_skeleton,
                       jacobian, jacobian_matrix, map_1d, map_1d_derivative,
                       skeleton_step)

#: width of the two-sided 90% interval in standard deviations (z_.95 - z_.05)
Z90 = 3.2897072539029457

#: defaults for orbit sweeps; near-critical slowing handled by `strict`
TRANSIENT = 1000
RECORD = 200
APERIODIC_CLUSTERS = 64
CLUSTER_TOL = 1e-6


def chi2_quantile(prob: float, dof: float) -> float:
    """Quantile of the chi-squared distribution via the regularized
    incomplete-gamma inverse; relative error <= 1e-8 against tables."""
    if not 0.0 < prob < 1.0:
        raise ValueError("prob must be inside (0, 1)")
    if dof <= 0:
        raise ValueError("dof must be positive")
    return 2.0 * float(gammaincinv(0.5 * dof, prob))


# ---------------------------------------------------------------------------
# orbit recording and attractor labels


def attractor_label(samples: np.ndarray, tol: float = CLUSTER_TOL) -> tuple[str, int]:
    """Cluster post-transient samples and name the attractor.

    Consecutive sorted samples closer than `tol` belong to one cluster;
    cardinality 1 is a fixed point, k <= 64 a k-cycle, beyond that the
    orbit is labeled aperiodic.
    """
    v = np.sort(np.asarray(samples, dtype=float))
    if v.size == 0:
        return "empty", 0
    card = int(np.count_nonzero(np.diff(v) > tol)) + 1
    if card == 1:
        return "fixed-point", 1
    if card > APERIODIC_CLUSTERS:
        return "aperiodic", card
    return f"{card}-cycle", card


def _set_param(p: ModelParams, name: str, value: float) -> ModelParams:
    """Apply a sweep parameter by its external name."""
    if name == "omega":
        return p.with_(omega=float(value))
    if name == "alpha":
        return p.with_(alpha=float(value))
    if name == "c":
        return p.with_(c=float(value))
    if name == "M":
        return p.with_(M=int(round(value)))
    if name == "Sigma_eps":
        return p.with_(sigma_eps_slow=float(value))
    raise ValueError(f"unknown sweep parameter {name!r}")


def _seed_1d(p: ModelParams) -> float:
    """Orbit seed: the (omega-independent) fixed point, slightly perturbed,
    falling back to the domain midpoint when none exists in-domain."""
    try:
        return fixed_point(MapKind.REDUCED1D, p) * (1.0 + 1e-6)
    except LevcycleError:
        return 0.5 * (1.0 + p.lambda_max)


def _seed_3d(p: ModelParams) -> SlowState:
    try:
        fp = fixed_point(MapKind.SKELETON3D, p)
        return SlowState.from_expectations(fp.lam * (1.0 + 1e-6),
                                           fp.sigma_d, fp.sigma_u, p)
    except LevcycleError:
        return consistent_start(p)


def _orbit_1d(p: ModelParams, transient: int, record: int, clamp: bool,
              seed: float | None = None) -> tuple[np.ndarray, bool, float]:
    """Post-transient lam samples of the 1D map; (samples, exited, last)."""
    lam = _seed_1d(p) if seed is None else seed
    exited = False
    out = np.empty(record)
    k = 0
    for t in range(transient + record):
        lam = map_1d(lam, p)
        if not (1.0 <= lam < p.lambda_max):
            exited = True
            if not clamp:
                return out[:k], True, lam
            lam = min(max(lam, 1.0), p.lambda_max - 1e-9)
        if t >= transient:
            out[k] = lam
            k += 1
    return out[:k], exited, lam


def _orbit_3d(p: ModelParams, transient: int, record: int, clamp: bool,
              seed: SlowState | None = None
              ) -> tuple[np.ndarray, np.ndarray, bool, SlowState]:
    """Post-transient (lam, m) samples of the skeleton."""
    start = _seed_3d(p) if seed is None else seed
    states, events = iterate_skeleton(start, p, transient, clamp=clamp)
    if len(states) < transient + 1 and not clamp:
        return np.empty(0), np.empty(0), True, states[-1]
    tail, ev2 = iterate_skeleton(states[-1], p, record, clamp=clamp)
    exited = bool(events or ev2)
    if len(tail) < record + 1 and not clamp:
        return np.empty(0), np.empty(0), True, tail[-1]
    lams = np.array([s.lam for s in tail[1:]])
    ms = np.array([s.m for s in tail[1:]])
    return lams, ms, exited, tail[-1]


@dataclass
class BifurcationDiagram:
    """Recorded attractor samples over one parameter grid.

    samples[i] holds the post-transient leverage values at grid[i];
    m_samples additionally holds diversification for the 3D map. Points
    whose orbit left the stationary domain carry exit=True and the label
    "domain-exit" (empty samples) unless the sweep was run clamped.
    """

    param: str
    grid: np.ndarray
    samples: list[np.ndarray]
    labels: list[str]
    cardinality: list[int]
    exits: list[bool]
    m_samples: list[np.ndarray] | None = None


def bifurcation_sweep(kind: MapKind, param: str, grid, p: ModelParams,
                      transient: int = TRANSIENT, record: int = RECORD,
                      strict: bool = False, clamp: bool = False) -> BifurcationDiagram:
    """Record post-transient orbits over a parameter grid.

    The first grid point seeds at the fixed point; subsequent points
    continue from the previous point's final state, following the
    attractor branch. `strict` multiplies the transient by 10 for
    near-critical points. Sweeping Sigma_eps holds the factor variance
    fixed at its absolute value.
    """
    if kind not in (MapKind.REDUCED1D, MapKind.SKELETON3D):
        raise ValueError(f"bifurcation sweep undefined for {kind}")
    if strict:
        transient *= 10
    grid = np.asarray(list(grid), dtype=float)
    samples: list[np.ndarray] = []
    m_samples: list[np.ndarray] = []
    labels: list[str] = []
    cards: list[int] = []
    exits: list[bool] = []
    carry = None
    for value in grid:
        pv = _set_param(p, param, value)
        # the carried state is nudged off any exactly-resolved fixed point,
        # which would otherwise pin the orbit onto the (possibly unstable)
        # fixed point of every later map in the family
        if kind is MapKind.REDUCED1D:
            seed = None if carry is None else carry * (1.0 + 1e-9)
            lams, exited, last = _orbit_1d(pv, transient, record, clamp, seed=seed)
            ms = np.empty(0)
            carry = None if exited else last
        else:
            seed = None
            if carry is not None:
                try:  # re-derive diversification under the new parameters
                    seed = SlowState.from_expectations(
                        carry.lam * (1.0 + 1e-9), carry.sigma_d, carry.sigma_u, pv)
                except LevcycleError:
                    seed = None
            try:
                lams, ms, exited, last3 = _orbit_3d(pv, transient, record, clamp,
                                                    seed=seed)
                carry = None if exited else last3
            except LevcycleError:
                lams, ms, exited, carry = np.empty(0), np.empty(0), True, None
        if exited and not clamp:
            labels.append("domain-exit")
            cards.append(0)
            samples.append(np.empty(0))
            m_samples.append(np.empty(0))
            exits.append(True)
            continue
        label, card = attractor_label(lams)
        labels.append(label)
        cards.append(card)
        samples.append(lams)
        m_samples.append(ms)
        exits.append(exited)
    return BifurcationDiagram(param=param, grid=grid, samples=samples,
                              labels=labels, cardinality=cards, exits=exits,
                              m_samples=m_samples if kind is MapKind.SKELETON3D else None)


# ---------------------------------------------------------------------------
# Lyapunov exponents


def lyapunov_1d(f, fprime, x0: float, iterations: int, transient: int = 100,
                domain=None) -> float:
    """Largest Lyapunov exponent of a scalar map: mean of ln|f'| on the orbit."""
    x = x0
    for _ in range(transient):
        x = f(x)
        if domain is not None and not (domain[0] <= x < domain[1]):
            raise LevcycleError("orbit left the domain during transient")
    acc = 0.0
    log = math.log
    for _ in range(iterations):
        acc += log(abs(fprime(x)))
        x = f(x)
        if domain is not None and not (domain[0] <= x < domain[1]):
            raise LevcycleError("orbit left the domain")
    return acc / iterations


def lyapunov_logistic(iterations: int = 10**6, x0: float = 0.123456789,
                      r: float = 4.0) -> float:
    """Validation harness: largest Lyapunov exponent of x -> r x (1-x).

    At r = 4 the map is conjugate to the tent map and the exponent is
    exactly ln 2.
    """
    x = x0
    acc = 0.0
    log = math.log
    for _ in range(iterations):
        acc += log(abs(r - 2.0 * r * x))
        x = r * x * (1.0 - x)
    return acc / iterations


def lyapunov(kind: MapKind, p: ModelParams, iterations: int = 4000,
             transient: int = TRANSIENT) -> float:
    """Largest Lyapunov exponent of the chosen deterministic map.

    REDUCED1D averages ln|f'| along the orbit; SKELETON3D renormalizes a
    tangent vector through finite-difference Jacobians. Raises if the
    orbit leaves the stationary domain (the exit is the caller's signal).
    """
    if kind is MapKind.REDUCED1D:
        return lyapunov_1d(lambda x: map_1d(x, p),
                           lambda x: map_1d_derivative(x, p),
                           0.5 * (1.0 + p.lambda_max), iterations,
                           transient=transient, domain=(1.0, p.lambda_max))
    if kind is not MapKind.SKELETON3D:
        raise ValueError(f"Lyapunov exponent undefined for {kind}")
    states, events = iterate_skeleton(consistent_start(p), p, transient)
    if events:
        raise LevcycleError(f"orbit left the domain during transient: {events[-1]}")
    s = states[-1]
    rng = np.random.default_rng(7)
    v = rng.standard_normal(3)
    v /= np.linalg.norm(v)
    acc = 0.0
    for t in range(iterations):
        J = jacobian_matrix(MapKind.SKELETON3D, s, p)
        v = J @ v
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return -math.inf
        acc += math.log(norm)
        v /= norm
        s, flags = skeleton_step(s, p)
        if flags:
            raise LevcycleError(f"orbit left the domain at iteration {t}")
    return acc / iterations


# ---------------------------------------------------------------------------
# stability boundaries


def _flip_margin(kind: MapKind, p: ModelParams, fp) -> float:
    """Distance of the most negative eigenvalue from -1 (positive = stable)."""
    if kind is MapKind.REDUCED1D:
        return map_1d_derivative(fp, p) + 1.0
    ev = jacobian(kind, SlowState.from_expectations(fp.lam, fp.sigma_d, fp.sigma_u, p), p)
    return float(np.min(ev.real)) + 1.0


def find_omega2(kind: MapKind, p: ModelParams, tol: float = 1e-6,
                bracket: tuple[float, float] = (1e-6, 1.0 - 1e-6)) -> float:
    """Memory at the first period-doubling: the flip eigenvalue equals -1.

    The fixed point itself is omega-independent, so only the Jacobian is
    re-evaluated along the omega bisection.
    """
    fp = fixed_point(kind, p.with_(omega=0.9))
    lo, hi = bracket
    m_lo = _flip_margin(kind, p.with_(omega=lo), fp)
    m_hi = _flip_margin(kind, p.with_(omega=hi), fp)
    if m_lo > 0.0:
        raise NoBifurcationInRange(
            f"flip margin {m_lo:g} > 0 even at omega={lo:g}")
    if m_hi < 0.0:
        raise NoBifurcationInRange(
            f"flip margin {m_hi:g} < 0 at omega={hi:g}; fixed point never stable")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _flip_margin(kind, p.with_(omega=mid), fp) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _orbit_stays(kind: MapKind, p: ModelParams, transient: int, record: int,
                 seed) -> bool:
    if kind is MapKind.REDUCED1D:
        _, exited, _ = _orbit_1d(p, transient, record, clamp=False, seed=seed)
        return not exited
    try:
        lams, _, exited, _ = _orbit_3d(p, transient, record, clamp=False, seed=seed)
    except LevcycleError:
        return False
    return not exited and lams.size == record


def find_omega_star(kind: MapKind, p: ModelParams, tol: float = 1e-4,
                    transient: int = TRANSIENT, record: int = RECORD,
                    bracket: tuple[float, float] = (1e-4, 1.0 - 1e-6)) -> float:
    """Smallest memory at which the orbit stays inside [1, gamma+1).

    Orbits start at the omega-independent fixed point (perturbed), so the
    exit criterion probes the attractor rather than start-up transients.
    Raises AlwaysStationary / NeverStationary when no transition exists in
    the bracket.
    """
    # one seed for all omega evaluations; the fixed point ignores omega
    seed = _seed_1d(p) if kind is MapKind.REDUCED1D else _seed_3d(p)
    lo, hi = bracket
    if _orbit_stays(kind, p.with_(omega=lo), transient, record, seed):
        raise AlwaysStationary(f"orbit stays in-domain even at omega={lo:g}")
    if not _orbit_stays(kind, p.with_(omega=hi), transient, record, seed):
        raise NeverStationary(f"orbit exits even at omega={hi:g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _orbit_stays(kind, p.with_(omega=mid), transient, record, seed):
            hi = mid
        else:
            lo = mid
    return hi


def threshold_sigma(p: ModelParams, lo: float = 1e-4, hi: float = 0.5,
                    tol: float = 1e-5) -> float:
    """sqrt(Sigma_eps) above which the 1D fixed point never flips.

    Bisection on the existence of omega2; below the threshold leverage
    cycles exist, above it the fixed point is stable for every memory.
    """
    def has_flip(sqrt_se: float) -> bool:
        try:
            find_omega2(MapKind.REDUCED1D, p.with_(sigma_eps_slow=sqrt_se**2))
        except (NoBifurcationInRange, LevcycleError):
            return False
        return True

    if not has_flip(lo):
        raise NoBifurcationInRange(f"no period-doubling even at sqrt(Sigma_eps)={lo:g}")
    if has_flip(hi):
        raise NoBifurcationInRange(f"period-doubling persists at sqrt(Sigma_eps)={hi:g}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if has_flip(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# finite-n perturbation envelope


@dataclass(frozen=True)
class Envelope:
    """90% fluctuation band of leverage induced by finite-window estimation.

    delta_sigma_eps2 / delta_sigma_f2 are the chi-squared 90% interval
    widths of the fast-scale variance estimators; delta_lambda is the
    stationary response of leverage to the full estimator noise.
    """

    delta_lambda: float
    delta_sigma_eps2: float
    delta_sigma_f2: float
    n: int


def chi2_interval_width(sigma2: float, n: int) -> float:
    """90% interval width of a realized-variance estimator of sigma2
    from n residuals: sigma2/(n-1) * (chi2_{.95} - chi2_{.05})."""
    dof = n - 1
    return sigma2 / dof * (chi2_quantile(0.95, dof) - chi2_quantile(0.05, dof))


def _envelope_reduced(n: int, p: ModelParams, lam: float) -> Envelope:
    """Stationary leverage band of the 1D model at a fixed point."""
    se2 = p.sigma_eps_slow / n      # fast-scale noise variance
    phi = (lam - 1.0) / p.gamma

    def step(lam_in: float, phi_est: float, se2_est: float) -> float:
        v = aggregate_variance_ar1(phi_est, se2_est, n)
        return (p.omega / lam_in**2 + (1.0 - p.omega) * p.alpha**2 * v) ** -0.5

    h_phi = max(abs(phi), 1e-3) * 1e-6
    h_se = se2 * 1e-6
    d_phi = (step(lam, phi + h_phi, se2) - step(lam, phi - h_phi, se2)) / (2 * h_phi)
    d_se = (step(lam, phi, se2 + h_se) - step(lam, phi, se2 - h_se)) / (2 * h_se)
    a = map_1d_derivative(lam, p)

    var_phi = (1.0 - phi * phi) / n          # asymptotic AR(1) MLE variance
    var_se = 2.0 * se2 * se2 / n
    var_noise = d_phi**2 * var_phi + d_se**2 * var_se
    var_lam = var_noise / (1.0 - a * a)
    return Envelope(delta_lambda=Z90 * math.sqrt(var_lam),
                    delta_sigma_eps2=chi2_interval_width(se2, n),
                    delta_sigma_f2=0.0, n=n)


def _envelope_skeleton(n: int, p: ModelParams, state: SlowState) -> Envelope:
    """Stationary leverage band of the 3D skeleton at a fixed point.

    Estimator noise enters the EWMA through (sigma_d_hat, sigma_u_hat);
    its covariance comes from the delta method over the four restricted
    MLE channels, and the stationary response solves the discrete
    Lyapunov equation P = J P J' + B Q B'.
    """
    se2, sf2 = p.sigma_eps_slow / n, p.sigma_f_slow / n
    M = p.M
    phi = (state.lam - 1.0) / (p.gamma * state.m)
    beta = phi * (state.m - 1.0) / (M - 1.0) if M > 1 else 0.0
    g, d = mode_coefficients(phi, beta, M)
    sg, sd = se2 + M * sf2, se2

    def agg(gv, dv, sgv, sdv):
        vg = sgv / (1.0 - gv * gv)
        vd = sdv / (1.0 - dv * dv)
        if M == 1:
            the0, psi0 = vg, 0.0
            ph, be = gv, 0.0
        else:
            psi0 = (vg - vd) / M
            the0 = vd + psi0
            ph = dv + (gv - dv) / M
            be = (gv - dv) / M
        return np.array(covariance_slow_scale(the0, psi0, ph, be, M, n))

    # delta method: covariance of (sigma_d_hat, sigma_u_hat)
    channels = [
        (g, (1.0 - g * g) / n, 0),
        (d, (1.0 - d * d) / (n * max(M - 1, 1)), 1),
        (sg, 2.0 * sg * sg / n, 2),
        (sd, 2.0 * sd * sd / (n * max(M - 1, 1)), 3),
    ]
    base = [g, d, sg, sd]
    Q = np.zeros((2, 2))
    for value, avar, idx in channels:
        h = max(abs(value), 1e-6) * 1e-6
        up = base.copy(); up[idx] = value + h
        dn = base.copy(); dn[idx] = value - h
        grad = (agg(*up) - agg(*dn)) / (2 * h)
        Q += np.outer(grad, grad) * avar

    J = jacobian_matrix(MapKind.SKELETON3D, state, p)

    # noise insertion: the estimates enter the EWMA with weight (1-omega)
    # and reach the new leverage through the same chain as the map itself
    def step_with_delta(delta: np.ndarray) -> np.ndarray:
        lim_d, lim_u = asymptotic_covariance(state.lam, state.m, p)
        sdn = ewma_update(state.sigma_d, lim_d + delta[0], p.omega)
        sun = ewma_update(state.sigma_u, lim_u + delta[1], p.omega)
        lam = solve_leverage(sdn, sun, p, x0=state.lam)
        return np.array([lam, sdn, sun])

    B = np.empty((3, 2))
    for j in range(2):
        h = max(state.sigma_d, 1e-12) * 1e-6
        e = np.zeros(2); e[j] = h
        B[:, j] = (step_with_delta(e) - step_with_delta(-e)) / (2 * h)

    # normalize coordinate scales (leverage vs variances differ by ~1e6)
    # so the Lyapunov solve is well conditioned
    scales = np.array([max(state.lam, 1.0), state.sigma_d,
                       max(abs(state.sigma_u), state.sigma_d)])
    D_inv = np.diag(1.0 / scales)
    D = np.diag(scales)
    J_n = D_inv @ J @ D
    Q_n = D_inv @ (B @ Q @ B.T) @ D_inv
    P = solve_discrete_lyapunov(J_n, Q_n)
    var_lam = max(float(P[0, 0]), 0.0) * scales[0] ** 2
    return Envelope(delta_lambda=Z90 * math.sqrt(var_lam),
                    delta_sigma_eps2=chi2_interval_width(se2, n),
                    delta_sigma_f2=chi2_interval_width(sf2, n) if sf2 > 0 else 0.0,
                    n=n)


def perturbation_envelope(n: int, p: ModelParams, state=None,
                          kind: MapKind = MapKind.REDUCED1D) -> Envelope:
    """90% leverage band around the skeleton from finite-window estimation.

    Requires a non-chaotic skeleton; on a positive Lyapunov exponent the
    linearization has no generalized equilibrium to perturb and
    NotApplicable is raised. The band shrinks as 1/sqrt(n) through the
    chi-squared quantile widths.
    """
    if n < 2:
        raise ValueError("need n >= 2 fast steps")
    lyap = lyapunov(kind, p, iterations=2000)
    if lyap > 0.0:
        raise NotApplicable(f"skeleton is chaotic (Lyapunov {lyap:g} > 0)")
    if state is None:
        state = fixed_point(kind, p)
    if kind is MapKind.REDUCED1D:
        return _envelope_reduced(n, p, float(state))
    if kind is MapKind.SKELETON3D:
        return _envelope_skeleton(n, p, state)
    raise ValueError(f"envelope undefined for {kind}")


# ---------------------------------------------------------------------------
# amplitude statistics


@dataclass(frozen=True)
class AmplitudeStats:
    """Amplitude measures of a leverage path: 90% inter-quantile range and
    coefficient of variation."""

    delta_lambda: float
    cv: float


def amplitude_stats(path: np.ndarray) -> AmplitudeStats:
    """Empirical 90% inter-quantile range and sigma/mean of a
    post-transient leverage path (length >= 100)."""
    x = np.asarray(path, dtype=float)
    if x.size < 100:
        raise ValueError("path too short; pass at least 100 post-transient samples")
    q05, q95 = np.quantile(x, [0.05, 0.95])
    return AmplitudeStats(delta_lambda=float(q95 - q05),
                          cv=float(np.std(x) / np.mean(x)))
