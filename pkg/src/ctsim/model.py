"""Primitives of the two-state awareness model.

Agents start as Stereotypes (S) and move to the absorbing Aware state (A)
at a constant hazard.  The election outcome is affine in the two latent
shares, ``p_bar = a0 + a1 * p + a2 * p_s``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class ModelError(ValueError):
    """Invalid model parameters or inputs."""


class State(str, enum.Enum):
    S = "S"
    A = "A"
    T = "T"


@dataclass(frozen=True)
class BehaviorParams:
    """Reporting behaviour.

    beta is the probability that a Stereotype reports a draw from the
    stereotype pool instead of its stable preference; xi is the accuracy of
    an Aware agent's report.
    """

    beta: float
    xi: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ModelError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.5 <= self.xi <= 1.0:
            raise ModelError(f"xi must lie in [1/2, 1], got {self.xi}")


@dataclass(frozen=True)
class ProcessParams:
    lam: float
    nu: float = 0.0

    def __post_init__(self):
        if not self.lam > 0.0 or not math.isfinite(self.lam):
            raise ModelError(f"lambda must be a positive finite number, got {self.lam}")
        if not 0.0 <= self.nu < self.lam:
            raise ModelError(f"nu must satisfy 0 <= nu < lambda, got nu={self.nu}")


@dataclass(frozen=True)
class PriorSpec:
    """Independent Gaussian priors on the stable share p and stereotype share p_s.

    Standard deviations of zero are accepted and mean a degenerate (known)
    share; negative values are rejected.
    """

    mu_p: float
    sigma_p: float
    mu_s: float
    sigma_s: float

    def __post_init__(self):
        for name in ("mu_p", "sigma_p", "mu_s", "sigma_s"):
            if not math.isfinite(getattr(self, name)):
                raise ModelError(f"{name} must be finite")
        if self.sigma_p < 0.0 or self.sigma_s < 0.0:
            raise ModelError("prior standard deviations must be nonnegative")

    @classmethod
    def equal(cls, mu: float, sigma: float) -> "PriorSpec":
        return cls(mu, sigma, mu, sigma)

    @property
    def var_p(self) -> float:
        return self.sigma_p ** 2

    @property
    def var_s(self) -> float:
        return self.sigma_s ** 2

    @property
    def equal_moments(self) -> bool:
        return self.mu_p == self.mu_s and self.sigma_p == self.sigma_s

    @property
    def well_inside_unit_interval(self) -> bool:
        """True when both priors keep mu +/- 3 sigma inside [0, 1]."""
        return all(
            mu - 3 * sd >= 0.0 and mu + 3 * sd <= 1.0
            for mu, sd in ((self.mu_p, self.sigma_p), (self.mu_s, self.sigma_s))
        )


@dataclass(frozen=True)
class StateShares:
    eta_s: float

    def __post_init__(self):
        if not 0.0 <= self.eta_s <= 1.0:
            raise ModelError(f"eta_s must lie in [0, 1], got {self.eta_s}")

    @property
    def eta_a(self) -> float:
        return 1.0 - self.eta_s


@dataclass(frozen=True)
class Loadings:
    a0: float
    a1: float
    a2: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a0, self.a1, self.a2)


@dataclass(frozen=True)
class Agent:
    y: int
    state: State
    report: int


def share_stereotype(proc: ProcessParams, t: float) -> StateShares:
    """Share of agents still in S at time t.

    With ``nu > 0`` a constant inflow re-enters as Stereotypes, so the share
    decays to ``nu / lam`` instead of zero.
    """
    if t < 0 or not math.isfinite(t):
        raise ModelError(f"t must be a finite nonnegative time, got {t}")
    decay = math.exp(-proc.lam * t)
    if proc.nu == 0.0:
        return StateShares(decay)
    floor = proc.nu / proc.lam
    return StateShares(floor + decay * (1.0 - floor))


def eta_stereotype(proc: ProcessParams, t):
    """Vectorised ``share_stereotype(proc, t).eta_s`` for array-valued t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ModelError("t must be nonnegative")
    decay = np.exp(-proc.lam * t)
    floor = proc.nu / proc.lam
    return floor + decay * (1.0 - floor)


def election_loadings(bp: BehaviorParams, shares: StateShares) -> Loadings:
    eta_s, eta_a = shares.eta_s, shares.eta_a
    a0 = eta_a * (1.0 - bp.xi)
    a2 = bp.beta * eta_s
    # equals 1 - a2 - 2 a0, written as a sum of nonnegative terms so it keeps
    # full relative precision when eta_s (hence a1 at xi = 1/2) is tiny
    a1 = eta_s * (1.0 - bp.beta) + eta_a * (2.0 * bp.xi - 1.0)
    return Loadings(a0, a1, a2)


def election_outcome(l: Loadings, p, p_s):
    return l.a0 + l.a1 * p + l.a2 * p_s


def clamp_unit(x: float) -> tuple[float, bool]:
    """Clamp a Bernoulli parameter to [0, 1]; the flag reports whether it moved."""
    if x < 0.0:
        return 0.0, True
    if x > 1.0:
        return 1.0, True
    return x, False


def draw_report(state: State, y: int, bp: BehaviorParams, p_s: float,
                rng: np.random.Generator) -> int:
    """Reported preference of one agent.

    A Stereotype reports ``Ber(p_s)`` with probability beta and its stable
    preference otherwise.  An Aware agent reports y with probability xi and
    flips it otherwise.  p_s is clamped to [0, 1] before use.
    """
    state = State(state)
    if state is State.S:
        if rng.random() < bp.beta:
            q, _ = clamp_unit(p_s)
            return int(rng.random() < q)
        return int(y)
    if state is State.A:
        return int(y) if rng.random() < bp.xi else 1 - int(y)
    if state is State.T:
        return int(y)
    raise ModelError(f"unknown state {state!r}")


def draw_agent(bp: BehaviorParams, eta_s: float, p: float, p_s: float,
               rng: np.random.Generator) -> Agent:
    q, _ = clamp_unit(p)
    y = int(rng.random() < q)
    state = State.S if rng.random() < eta_s else State.A
    return Agent(y=y, state=state, report=draw_report(state, y, bp, p_s, rng))


def quadratic_welfare(a, p):
    return -((a - p) ** 2)


def time_for_share(proc: ProcessParams, eta_s: float) -> float:
    """Inverse of ``share_stereotype``: the time at which the S share equals eta_s."""
    floor = proc.nu / proc.lam
    if not floor < eta_s <= 1.0:
        raise ModelError(f"eta_s must lie in ({floor}, 1], got {eta_s}")
    return -math.log((eta_s - floor) / (1.0 - floor)) / proc.lam
