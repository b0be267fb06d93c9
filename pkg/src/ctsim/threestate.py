"""Three-state extension: S -> A -> T.

Stereotypes (S) move to an intermediate Aware state (A) at rate lambda1
and on to a settled Type state (T) at rate lambda2.  T agents report their
stable preference; A agents report it with accuracy xi_A.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .model import BehaviorParams, Loadings, ModelError, State

NO_POWER_CELL = 30


class EstimationError(ValueError):
    pass


class EmptyCellError(EstimationError):
    pass


class ZeroBetaError(EstimationError):
    pass


@dataclass(frozen=True)
class ChainParams:
    lambda1: float
    lambda2: float

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ModelError("both chain intensities must be positive")


@dataclass(frozen=True)
class ChainShares:
    mu_s: float
    mu_a: float
    mu_t: float


def chain_shares(cp: ChainParams, t: float) -> ChainShares:
    if t < 0 or not math.isfinite(t):
        raise ModelError(f"t must be a finite nonnegative time, got {t}")
    l1, l2 = cp.lambda1, cp.lambda2
    mu_s = math.exp(-l1 * t)
    d = l2 - l1
    # l1/(l2-l1) (e^{-l1 t} - e^{-l2 t}) written with expm1 so the l1 == l2 seam is smooth
    if d == 0.0:
        mu_a = l1 * t * mu_s
    else:
        mu_a = l1 * mu_s * (-math.expm1(-d * t)) / d
    mu_t = max(0.0, 1.0 - mu_s - mu_a)
    return ChainShares(mu_s, mu_a, mu_t)


def election_loadings_3(bp: BehaviorParams, cs: ChainShares) -> Loadings:
    a0 = cs.mu_a * (1.0 - bp.xi)
    a2 = bp.beta * cs.mu_s
    a1 = cs.mu_s * (1.0 - bp.beta) + cs.mu_a * (2.0 * bp.xi - 1.0) + cs.mu_t
    return Loadings(a0, a1, a2)


def abstention_outcome(bp: BehaviorParams, cs: ChainShares, p, p_s):
    """Outcome when A agents abstain and only S and T agents vote.

    Not affine in the sense of the closed forms, so it is kept out of the
    welfare comparisons.
    """
    voters = cs.mu_s + cs.mu_t
    if voters <= 0.0:
        raise ModelError("no voters: every agent is in the abstaining state")
    return (cs.mu_t * p + cs.mu_s * (bp.beta * p_s + (1.0 - bp.beta) * p)) / voters


def simulate_chain(cp: ChainParams, t: float, n_agents: int,
                   rng: np.random.Generator) -> ChainShares:
    """Empirical state shares of ``n_agents`` independent chains at time t."""
    e = rng.standard_exponential((2, n_agents))
    n_s, n_a, n_t = _kernels.chain_counts(e[0], e[1], cp.lambda1, cp.lambda2, t)
    return ChainShares(n_s / n_agents, n_a / n_agents, n_t / n_agents)


@dataclass(frozen=True)
class PanelRecord:
    subject_id: str
    ex_ante_report: int
    ex_ante_state: State
    ex_post_state: State
    stable_pref: int | None = None


@dataclass(frozen=True)
class IdentificationEstimates:
    """Panel estimators of (beta, p_s, xi_A) and the stable share.

    Estimates that cannot be formed are None, with the reason recorded in
    ``failures`` (``"empty_cell"`` or ``"zero_beta"``).
    """

    beta_hat: float | None
    p_s_hat: float | None
    p_hat: float | None
    xi_hat_1: float | None
    xi_hat_0: float | None
    counts: dict[str, int]
    se: dict[str, float]
    failures: dict[str, str] = field(default_factory=dict)

    def require(self, *names: str) -> None:
        """Raise the matching estimation error if any named estimate is missing."""
        for name in names or ("beta_hat", "p_s_hat", "p_hat", "xi_hat_1", "xi_hat_0"):
            reason = self.failures.get(name)
            if reason == "zero_beta":
                raise ZeroBetaError(f"{name}: beta_hat is zero")
            if reason is not None:
                raise EmptyCellError(f"{name}: conditioning cell is empty")


def _cell_mean(values: list[int]):
    if not values:
        return None, 0, math.nan
    n = len(values)
    m = sum(values) / n
    return m, n, math.sqrt(m * (1.0 - m) / n)


def identify_from_panel(panel) -> IdentificationEstimates:
    s1, s0, a1, a0, ys = [], [], [], [], []
    for r in panel:
        if r.stable_pref is not None:
            ys.append(int(r.stable_pref))
        if State(r.ex_post_state) is not State.T or r.stable_pref is None:
            continue
        start = State(r.ex_ante_state)
        if start is State.S:
            (s1 if r.stable_pref == 1 else s0).append(int(r.ex_ante_report))
        elif start is State.A:
            (a1 if r.stable_pref == 1 else a0).append(int(r.ex_ante_report))

    xs1, n_s1, se_s1 = _cell_mean(s1)
    xs0, n_s0, se_s0 = _cell_mean(s0)
    xa1, n_a1, se_a1 = _cell_mean(a1)
    xa0, n_a0, se_a0 = _cell_mean(a0)
    p_hat, n_y, se_y = _cell_mean(ys)
    failures: dict[str, str] = {}
    se = {"p_hat": se_y, "xi_hat_1": se_a1, "xi_hat_0": se_a0}

    beta_hat = p_s_hat = None
    if xs1 is None or xs0 is None:
        failures["beta_hat"] = failures["p_s_hat"] = "empty_cell"
    else:
        beta_hat = 1.0 - (xs1 - xs0)
        se["beta_hat"] = math.hypot(se_s1, se_s0)
        if beta_hat == 0.0:
            failures["p_s_hat"] = "zero_beta"
        else:
            p_s_hat = xs0 / beta_hat
            # delta method on x0 / (1 - x1 + x0)
            d_x1 = xs0 / beta_hat ** 2
            d_x0 = (beta_hat - xs0) / beta_hat ** 2
            se["p_s_hat"] = math.hypot(d_x1 * se_s1, d_x0 * se_s0)
    if p_hat is None:
        failures["p_hat"] = "empty_cell"
    xi_hat_1 = xa1
    xi_hat_0 = None if xa0 is None else 1.0 - xa0
    if xi_hat_1 is None:
        failures["xi_hat_1"] = "empty_cell"
    if xi_hat_0 is None:
        failures["xi_hat_0"] = "empty_cell"
    counts = {"s_given_1": n_s1, "s_given_0": n_s0, "a_given_1": n_a1,
              "a_given_0": n_a0, "y": n_y}
    return IdentificationEstimates(beta_hat, p_s_hat, p_hat, xi_hat_1, xi_hat_0,
                                   counts, se, failures)


@dataclass(frozen=True)
class SymmetryTest:
    z: float
    p_value: float
    low_power: bool


def normal_two_sided_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def symmetry_test(xi_hat_1: float, n1: int, xi_hat_0: float, n0: int) -> SymmetryTest:
    """Two-proportion z test of ``xi_hat_1 == xi_hat_0`` (unpooled variance).

    Cells with fewer than 30 observations are flagged as having almost no
    power; the statistic is still reported.
    """
    if n1 <= 0 or n0 <= 0:
        raise EmptyCellError("symmetry test needs both A-origin cells to be nonempty")
    var = xi_hat_1 * (1 - xi_hat_1) / n1 + xi_hat_0 * (1 - xi_hat_0) / n0
    diff = xi_hat_1 - xi_hat_0
    if var <= 0.0:
        z = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        z = diff / math.sqrt(var)
    return SymmetryTest(z, normal_two_sided_p(z), min(n1, n0) < NO_POWER_CELL)


def synthetic_panel(n: int, beta: float, p_s: float, xi_a: float, p: float,
                    start_shares: tuple[float, float, float], cp: ChainParams,
                    exposure: float, rng: np.random.Generator) -> list[PanelRecord]:
    """Subjects drawn from the three-state model itself.

    Ex-ante states follow ``start_shares`` (S, A, T); each subject then runs
    the chain for ``exposure`` time units.  The stable preference is only
    observed for subjects that end in T.
    """
    w = np.asarray(start_shares, dtype=float)
    if w.shape != (3,) or np.any(w < 0) or not math.isclose(w.sum(), 1.0):
        raise ModelError("start_shares must be three nonnegative shares summing to 1")
    y = rng.random(n) < p
    start = rng.choice(3, size=n, p=w)
    branch = rng.random(n)
    stereo = rng.random(n) < p_s
    report = np.where(start == 0, np.where(branch < beta, stereo, y),
                      np.where(start == 1, np.where(branch < xi_a, y, ~y), y))
    e = rng.standard_exponential((2, n))
    tau1 = e[0] / cp.lambda1
    tau2 = e[1] / cp.lambda2
    end = np.where(start == 2, 2,
                   np.where(start == 1, np.where(tau2 <= exposure, 2, 1),
                            np.where(tau1 > exposure, 0,
                                     np.where(tau1 + tau2 <= exposure, 2, 1))))
    states = (State.S, State.A, State.T)
    return [
        PanelRecord(str(i), int(report[i]), states[start[i]], states[end[i]],
                    int(y[i]) if end[i] == 2 else None)
        for i in range(n)
    ]


PANEL_FIELDS = ("subject_id", "ex_ante_report", "ex_ante_state", "ex_post_state", "stable_pref")


def read_panel_csv(path) -> list[PanelRecord]:
    from .io import CsvFormatError

    records, errors = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in PANEL_FIELDS if f not in (reader.fieldnames or [])]
        if reader.fieldnames is not None and missing:
            raise CsvFormatError([f"line 1: missing columns {', '.join(missing)}"])
        for row in reader:
            line = reader.line_num
            try:
                sp = (row["stable_pref"] or "").strip()
                rec = PanelRecord(
                    subject_id=row["subject_id"],
                    ex_ante_report=_binary(row["ex_ante_report"]),
                    ex_ante_state=State(row["ex_ante_state"].strip().upper()),
                    ex_post_state=State(row["ex_post_state"].strip().upper()),
                    stable_pref=None if sp == "" else _binary(sp),
                )
            except (ValueError, KeyError, AttributeError) as exc:
                errors.append(f"line {line}: {exc}")
                continue
            records.append(rec)
    if errors:
        raise CsvFormatError(errors)
    return records


def write_panel_csv(path: str | Path, panel) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PANEL_FIELDS)
        for r in panel:
            w.writerow([r.subject_id, r.ex_ante_report, State(r.ex_ante_state).value,
                        State(r.ex_post_state).value,
                        "" if r.stable_pref is None else r.stable_pref])


def _binary(text: str) -> int:
    v = int(str(text).strip())
    if v not in (0, 1):
        raise ValueError(f"expected 0 or 1, got {text!r}")
    return v
