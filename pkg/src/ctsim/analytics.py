"""Closed-form posterior, welfare and bias for the linear-Gaussian election.

Every quantity here is a function of the outcome loadings ``(a0, a1, a2)``
and the priors, so the same formulas serve the two-state and three-state
models.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    BehaviorParams,
    Loadings,
    ModelError,
    PriorSpec,
    ProcessParams,
    StateShares,
    election_loadings,
    share_stereotype,
)

IDENTITY_TOL = 1e-12
ROOT_TOL = 1e-10
# relative slack when deciding the closed-form zero-bias boundary
BOUNDARY_RTOL = 1e-12


class ZeroBiasNonConvergence(RuntimeError):
    """Bisection bracketed a root but could not drive the bias below tolerance."""


class Regime(str, enum.Enum):
    ALWAYS_INCREASING = "AlwaysIncreasing"
    INTERIOR_MAXIMUM = "InteriorMaximum"
    ALWAYS_DECREASING = "AlwaysDecreasing"


@dataclass(frozen=True)
class PosteriorLoadings:
    g0: float
    g1: float
    g2: float


@dataclass(frozen=True)
class WelfareReport:
    t: float
    eta_s: float
    w_p: float
    w_i: float
    bias: float


@dataclass(frozen=True)
class RegimeResult:
    """Shape of institutional welfare as a function of poll time.

    ``threshold_eta`` is the stereotype share at which dW_I/dt changes
    sign; it may fall outside [0, 1].  ``method`` is ``"closed-form"`` for
    the equal-moments formula and ``"numerical"`` for a sampled profile.
    """

    regime: Regime
    threshold_eta: float
    t_max: float | None = None
    method: str = "closed-form"
    profile: tuple[int, ...] = field(default=(), repr=False)


def loadings_at(bp: BehaviorParams, proc: ProcessParams, t: float) -> Loadings:
    return election_loadings(bp, share_stereotype(proc, t))


def posterior_loadings(l: Loadings, pr: PriorSpec) -> PosteriorLoadings:
    """Loadings of ``p_hat = E[p | p_bar]`` on (1, p, p_s).

    When the outcome has zero variance it carries no information and the
    posterior is the prior mean.
    """
    vp, vs = pr.var_p, pr.var_s
    d = l.a1 ** 2 * vp + l.a2 ** 2 * vs
    if d <= 0.0:
        return PosteriorLoadings(pr.mu_p, 0.0, 0.0)
    g1 = l.a1 ** 2 * vp / d
    g2 = l.a1 * l.a2 * vp / d
    g0 = (l.a2 ** 2 * vs * pr.mu_p - l.a1 * l.a2 * vp * pr.mu_s) / d
    return PosteriorLoadings(g0, g1, g2)


def posterior_mean(p_bar, l: Loadings, pr: PriorSpec):
    """``E[p | p_bar]`` evaluated at an observed outcome (scalar or array)."""
    vp = pr.var_p
    d = l.a1 ** 2 * vp + l.a2 ** 2 * pr.var_s
    if d <= 0.0:
        return np.zeros_like(np.asarray(p_bar, dtype=float)) + pr.mu_p
    mean_bar = l.a0 + l.a1 * pr.mu_p + l.a2 * pr.mu_s
    return pr.mu_p + (l.a1 * vp / d) * (np.asarray(p_bar, dtype=float) - mean_bar)


def welfare_positive(l: Loadings, pr: PriorSpec) -> float:
    vp, vs = pr.var_p, pr.var_s
    d = l.a1 ** 2 * vp + l.a2 ** 2 * vs
    if d <= 0.0:
        return -vp
    return -(l.a2 ** 2) * vs * vp / d


def welfare_institutional(l: Loadings, pr: PriorSpec) -> float:
    mean_gap = l.a0 + (l.a1 - 1.0) * pr.mu_p + l.a2 * pr.mu_s
    return -(mean_gap ** 2 + (l.a1 - 1.0) ** 2 * pr.var_p + l.a2 ** 2 * pr.var_s)


def election_bias(l: Loadings, g: PosteriorLoadings, pr: PriorSpec) -> float:
    d0, d1, d2 = l.a0 - g.g0, l.a1 - g.g1, l.a2 - g.g2
    mean_gap = d0 + d1 * pr.mu_p + d2 * pr.mu_s
    return mean_gap ** 2 + d1 ** 2 * pr.var_p + d2 ** 2 * pr.var_s


def bias_of(l: Loadings, pr: PriorSpec) -> float:
    return election_bias(l, posterior_loadings(l, pr), pr)


def welfare_report(bp: BehaviorParams, pr: PriorSpec, proc: ProcessParams,
                   t: float) -> WelfareReport:
    shares = share_stereotype(proc, t)
    l = election_loadings(bp, shares)
    g = posterior_loadings(l, pr)
    return WelfareReport(
        t=float(t),
        eta_s=shares.eta_s,
        w_p=welfare_positive(l, pr),
        w_i=welfare_institutional(l, pr),
        bias=election_bias(l, g, pr),
    )


def welfare_curve(bp: BehaviorParams, pr: PriorSpec, proc: ProcessParams,
                  t_grid) -> list[WelfareReport]:
    ts = np.asarray(t_grid, dtype=float).ravel()
    if ts.size == 0:
        raise ModelError("t_grid must be nonempty")
    if np.any(np.diff(ts) < 0):
        raise ModelError("t_grid must be in ascending order")
    return [welfare_report(bp, pr, proc, float(t)) for t in ts]


def regime_threshold(beta: float, xi: float, mu: float, sigma: float) -> float:
    """Stereotype share where dW_I/d eta_s vanishes (equal prior moments).

    W_I increases in time while eta_s is above this value and decreases
    once eta_s falls below it.  Returns 0.0 when W_I does not depend on
    eta_s at all.
    """
    u = 1.0 - xi
    s2 = sigma ** 2
    k = (1.0 - 2.0 * mu) ** 2 + 4.0 * s2
    num = -4.0 * beta * s2 * u + 2.0 * u ** 2 * k
    den = 4.0 * beta ** 2 * s2 - 8.0 * beta * s2 * u + 2.0 * u ** 2 * k
    if den <= 0.0:
        return 0.0
    return num / den


def classify_regime(bp: BehaviorParams, pr: PriorSpec, lam: float) -> RegimeResult:
    """Classify the time profile of institutional welfare.

    Requires identical priors for p and p_s.  A threshold at or above one
    means W_I falls from t = 0 onward; at or below zero it rises for all t;
    in between it peaks at ``t_max = -log(threshold) / lam``.
    """
    if not pr.equal_moments:
        raise ModelError("classify_regime requires mu_p == mu_s and sigma_p == sigma_s; "
                         "use classify_regime_numerical for unequal priors")
    if not lam > 0:
        raise ModelError("lambda must be positive")
    th = regime_threshold(bp.beta, bp.xi, pr.mu_p, pr.sigma_p)
    if th >= 1.0:
        return RegimeResult(Regime.ALWAYS_DECREASING, th)
    if th <= 0.0:
        return RegimeResult(Regime.ALWAYS_INCREASING, th)
    return RegimeResult(Regime.INTERIOR_MAXIMUM, th, t_max=-math.log(th) / lam)


def classify_regime_numerical(bp: BehaviorParams, pr: PriorSpec, proc: ProcessParams,
                              t_grid=None, step: float = 1e-5) -> RegimeResult:
    """Sampled sign profile of dW_I/dt from centred finite differences."""
    if t_grid is None:
        t_grid = np.linspace(step, 8.0 / proc.lam, 200)
    ts = np.asarray(t_grid, dtype=float)
    signs = []
    for t in ts:
        lo = max(t - step, 0.0)
        hi = t + step
        dw = (welfare_report(bp, pr, proc, hi).w_i
              - welfare_report(bp, pr, proc, lo).w_i) / (hi - lo)
        signs.append(0 if abs(dw) < 1e-12 else (1 if dw > 0 else -1))
    nonzero = [s for s in signs if s != 0]
    if not nonzero or all(s > 0 for s in nonzero):
        regime, t_max = Regime.ALWAYS_INCREASING, None
    elif all(s < 0 for s in nonzero):
        regime, t_max = Regime.ALWAYS_DECREASING, None
    else:
        regime = Regime.INTERIOR_MAXIMUM
        first_neg = next(i for i, s in enumerate(signs) if s < 0)
        t_max = float(ts[first_neg])
    eta = share_stereotype(proc, t_max).eta_s if t_max is not None else math.nan
    return RegimeResult(regime, eta, t_max=t_max, method="numerical",
                        profile=tuple(signs))


def _slope_gap(eta: float, beta: float, xi: float, vp: float, vs: float) -> float:
    # a1 (1 - a1) vp - a2^2 vs: zero exactly where the posterior slopes match the outcome's
    a2 = beta * eta
    a1 = eta * (1.0 - beta) + (1.0 - eta) * (2.0 * xi - 1.0)
    return a1 * (1.0 - a1) * vp - a2 ** 2 * vs


def _bisect(f, lo: float, hi: float, rtol: float = 1e-15, max_iter: int = 2000):
    # relative stopping rule: brackets in the geometric tail can sit far below 1e-15
    flo = f(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or hi - lo <= rtol * hi:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def zero_bias_time(bp: BehaviorParams, pr: PriorSpec, lam: float,
                   tol: float = ROOT_TOL, scan_points: int = 1024) -> float | None:
    """Earliest poll time at which the election is unbiased, or None.

    Needs ``mu_p == mu_s``.  With ``xi == 1`` the time is available in
    closed form; otherwise the stereotype share solving the slope-matching
    equation is bracketed by a sign scan over [1e-300, 1] and refined by
    bisection.  For ``xi < 1`` and ``mu != 1/2`` matching slopes leaves an
    intercept gap, so no zero-bias time exists and None is returned.

    Raises
    ------
    ModelError
        If the prior means differ or sigma_p is zero.
    ZeroBiasNonConvergence
        If a bracket is found but the bias cannot be brought below ``tol``.
    """
    if pr.mu_p != pr.mu_s:
        raise ModelError("zero_bias_time requires mu_p == mu_s")
    if not lam > 0:
        raise ModelError("lambda must be positive")
    vp, vs = pr.var_p, pr.var_s
    if vp <= 0.0:
        raise ModelError("sigma_p must be positive")
    beta, xi = bp.beta, bp.xi
    if beta == 0.0:
        # no stereotype draws: p_bar = p at t = 0
        return 0.0

    if xi == 1.0:
        arg = vp / (beta * (vp + vs))
        if arg > 1.0 + BOUNDARY_RTOL:
            return None
        if arg >= 1.0 - BOUNDARY_RTOL:
            return 0.0
        return -math.log(arg) / lam

    def bias_at(eta):
        return bias_of(election_loadings(bp, StateShares(eta)), pr)

    def gap(eta):
        return _slope_gap(eta, beta, xi, vp, vs)

    # linear grid on (0, 1], then a geometric tail towards 0 for roots at late times
    etas = np.concatenate([1.0 - np.arange(scan_points) / scan_points,
                           np.geomspace(1.0 / scan_points, 1e-300, 300)[1:]])
    values = [gap(e) for e in etas]
    scale = max(vp, vs)
    root = None
    if abs(values[0]) <= BOUNDARY_RTOL * scale:
        root = 1.0
    else:
        for k in range(len(etas) - 1):
            if values[k + 1] == 0.0:
                root = float(etas[k + 1])
                break
            if (values[k] < 0) != (values[k + 1] < 0):
                root = _bisect(gap, float(etas[k + 1]), float(etas[k]))
                break
    if root is None:
        return None
    b = bias_at(root)
    if b <= tol:
        return max(0.0, -math.log(root) / lam)
    if abs(gap(root)) <= 1e-13 * scale:
        # slopes agree but a0 != g0: bias is strictly positive for every t
        return None
    raise ZeroBiasNonConvergence(
        f"bracketed root at eta={root!r} leaves bias {b:.3e} > {tol:.1e}")
