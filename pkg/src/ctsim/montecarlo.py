"""Monte Carlo checks of the closed-form welfare formulas.

Two simulation modes:

* ``LINEAR_GAUSSIAN`` draws (p, p_s) from the priors and applies the affine
  outcome and posterior loadings, i.e. exactly the model behind the closed
  forms.
* ``MICROFOUNDED`` additionally draws a finite population of agents and
  uses the empirical share of 1-reports as the outcome.

Randomness is counter-based: replications are grouped in fixed-size blocks
and block ``k`` of a run seeded with ``seed`` always consumes the stream
``SeedSequence(seed, spawn_key=(mode, k))``.  Results therefore do not
depend on how blocks are scheduled across workers.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .analytics import (
    bias_of,
    posterior_loadings,
    posterior_mean,
    welfare_institutional,
    welfare_positive,
)
from .model import (
    BehaviorParams,
    Loadings,
    ModelError,
    PriorSpec,
    ProcessParams,
    election_loadings,
    share_stereotype,
    time_for_share,
)

DEFAULT_BLOCK = 8192
EXACT_TOL = 1e-12


class Mode(str, enum.Enum):
    LINEAR_GAUSSIAN = "linear_gaussian"
    MICROFOUNDED = "microfounded"


class Target(str, enum.Enum):
    WP = "WP"
    WI = "WI"
    BIAS = "Bias"
    PBAR_MEAN = "PbarMean"


@dataclass(frozen=True)
class McConfig:
    behavior: BehaviorParams
    process: ProcessParams
    prior: PriorSpec
    t: float = 0.0
    replications: int = 10_000
    mode: Mode = Mode.LINEAR_GAUSSIAN
    agents: int = 1_000
    seed: int = 0
    block_size: int = DEFAULT_BLOCK

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.replications < 1:
            raise ModelError("replications must be >= 1")
        if self.mode is Mode.MICROFOUNDED and self.agents < 1:
            raise ModelError("agents must be >= 1 in microfounded mode")
        if self.block_size < 1:
            raise ModelError("block_size must be >= 1")
        if self.t < 0:
            raise ModelError("t must be nonnegative")
        if not 0 <= self.seed < 2 ** 64:
            raise ModelError("seed must be a 64-bit unsigned integer")

    @property
    def eta_s(self) -> float:
        return share_stereotype(self.process, self.t).eta_s

    @property
    def loadings(self) -> Loadings:
        return election_loadings(self.behavior, share_stereotype(self.process, self.t))


@dataclass(frozen=True)
class ReplicationRecord:
    p: float
    p_s: float
    p_bar: float
    p_hat: float


@dataclass(frozen=True)
class Simulation:
    p: np.ndarray
    p_s: np.ndarray
    p_bar: np.ndarray
    p_hat: np.ndarray
    clamp_events: int = 0


@dataclass(frozen=True)
class McReport:
    target: Target
    estimate: float
    std_error: float
    replications: int
    clamp_events: int = 0


@dataclass(frozen=True)
class ComparisonRow:
    cell: int
    beta: float
    xi: float
    t: float
    eta_s: float
    target: Target
    closed: float
    mc: float
    std_error: float
    z: float | None
    status: str

    @property
    def flagged(self) -> bool:
        return self.status == "fail"


def derive_seed(master: int, *keys: int) -> int:
    """Child 64-bit seed for a sub-stream identified by ``keys``."""
    words = np.random.SeedSequence(master, spawn_key=tuple(keys)).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def _generator(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=keys)))


def _block_ranges(cfg: McConfig):
    n, b = cfg.replications, cfg.block_size
    return [(k, k * b, min(n, (k + 1) * b)) for k in range(math.ceil(n / b))]


def _linear_block(cfg: McConfig, block: int, size: int):
    pr = cfg.prior
    z = _generator(cfg.seed, 0, block).standard_normal((2, size))
    p = pr.mu_p + pr.sigma_p * z[0]
    p_s = pr.mu_s + pr.sigma_s * z[1]
    l = cfg.loadings
    g = posterior_loadings(l, pr)
    p_bar, p_hat = _kernels.loss_terms(p, p_s, l.a0, l.a1, l.a2, g.g0, g.g1, g.g2)
    return p, p_s, p_bar, p_hat, 0


def _micro_replication(cfg: McConfig, rep: int):
    pr, bp = cfg.prior, cfg.behavior
    rng = _generator(cfg.seed, 1, rep)
    z = rng.standard_normal(2)
    p = pr.mu_p + pr.sigma_p * z[0]
    p_s = pr.mu_s + pr.sigma_s * z[1]
    u = rng.random((4, cfg.agents))
    q = min(max(p, 0.0), 1.0)
    q_s = min(max(p_s, 0.0), 1.0)
    clamps = int(q != p) + int(q_s != p_s)
    ones = _kernels.count_reports(u[0], u[1], u[2], u[3], cfg.eta_s, q, q_s, bp.beta, bp.xi)
    p_bar = ones / cfg.agents
    p_hat = float(posterior_mean(p_bar, cfg.loadings, pr))
    return p, p_s, p_bar, p_hat, clamps


def _micro_block(cfg: McConfig, start: int, stop: int):
    out = np.empty((4, stop - start))
    clamps = 0
    for j, rep in enumerate(range(start, stop)):
        *vals, c = _micro_replication(cfg, rep)
        out[:, j] = vals
        clamps += c
    return out[0], out[1], out[2], out[3], clamps


def simulate_replication(cfg: McConfig, rep_index: int) -> ReplicationRecord:
    if not 0 <= rep_index < cfg.replications:
        raise ModelError(f"rep_index must lie in [0, {cfg.replications})")
    if cfg.mode is Mode.MICROFOUNDED:
        p, p_s, p_bar, p_hat, _ = _micro_replication(cfg, rep_index)
        return ReplicationRecord(p, p_s, p_bar, p_hat)
    block, offset = divmod(rep_index, cfg.block_size)
    _, start, stop = _block_ranges(cfg)[block]
    p, p_s, p_bar, p_hat, _ = _linear_block(cfg, block, stop - start)
    return ReplicationRecord(float(p[offset]), float(p_s[offset]),
                             float(p_bar[offset]), float(p_hat[offset]))


def simulate(cfg: McConfig, workers: int = 1) -> Simulation:
    """All replications of ``cfg``, in replication order."""
    ranges = _block_ranges(cfg)
    if cfg.mode is Mode.MICROFOUNDED:
        def run(r):
            return _micro_block(cfg, r[1], r[2])
    else:
        def run(r):
            return _linear_block(cfg, r[0], r[2] - r[1])
    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, ranges))
    else:
        parts = [run(r) for r in ranges]
    cols = [np.concatenate([part[i] for part in parts]) for i in range(4)]
    return Simulation(*cols, clamp_events=sum(part[4] for part in parts))


def per_replication(sim: Simulation, target: Target) -> np.ndarray:
    target = Target(target)
    if target is Target.WP:
        return -((sim.p_hat - sim.p) ** 2)
    if target is Target.WI:
        return -((sim.p_bar - sim.p) ** 2)
    if target is Target.BIAS:
        return (sim.p_bar - sim.p_hat) ** 2
    return sim.p_bar.copy()


def summarize(values: np.ndarray, target: Target, clamp_events: int = 0) -> McReport:
    n = values.shape[0]
    est = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McReport(Target(target), est, se, n, clamp_events)


def estimate_welfare_mc(cfg: McConfig, target: Target, workers: int = 1) -> McReport:
    sim = simulate(cfg, workers=workers)
    return summarize(per_replication(sim, target), target, sim.clamp_events)


def estimate_all(cfg: McConfig, targets=(Target.WP, Target.WI, Target.BIAS),
                 workers: int = 1) -> dict[Target, McReport]:
    sim = simulate(cfg, workers=workers)
    return {Target(t): summarize(per_replication(sim, t), t, sim.clamp_events)
            for t in targets}


def closed_form(cfg: McConfig, target: Target) -> float:
    l, pr = cfg.loadings, cfg.prior
    target = Target(target)
    if target is Target.WP:
        return welfare_positive(l, pr)
    if target is Target.WI:
        return welfare_institutional(l, pr)
    if target is Target.BIAS:
        return bias_of(l, pr)
    return l.a0 + l.a1 * pr.mu_p + l.a2 * pr.mu_s


def grid_cells(base: McConfig, betas, xis, eta_s=None, times=None) -> list[McConfig]:
    """Cartesian (beta, xi, time) grid; times may be given as S shares.

    Each cell gets its own seed derived from ``base.seed`` and the cell index.
    """
    if (eta_s is None) == (times is None):
        raise ModelError("give exactly one of eta_s or times")
    ts = list(times) if times is not None else [time_for_share(base.process, e) for e in eta_s]
    cells = []
    for beta in betas:
        for xi in xis:
            for t in ts:
                k = len(cells)
                cells.append(replace(base, behavior=BehaviorParams(beta, xi), t=max(0.0, t),
                                     seed=derive_seed(base.seed, k)))
    return cells


def _compare_cell(k: int, cfg: McConfig, targets, z_fail: float, offset: float):
    reports = estimate_all(cfg, targets)
    rows = []
    for target in targets:
        rep = reports[Target(target)]
        closed = closed_form(cfg, target) + offset
        scale = max(1.0, abs(rep.estimate))
        if rep.std_error <= 1e-15 * scale:
            exact = abs(rep.estimate - closed) <= EXACT_TOL
            z, status = None, ("exact" if exact else "fail")
        else:
            z = (rep.estimate - closed) / rep.std_error
            status = "fail" if abs(z) > z_fail else "ok"
        rows.append(ComparisonRow(k, cfg.behavior.beta, cfg.behavior.xi, cfg.t, cfg.eta_s,
                                  Target(target), closed, rep.estimate, rep.std_error,
                                  z, status))
    return rows


def compare_mc_closed_form(cells, targets=(Target.WP, Target.WI, Target.BIAS),
                           z_fail: float = 4.0, workers: int = 1,
                           closed_form_offset: float = 0.0) -> list[ComparisonRow]:
    """Monte Carlo estimate against the closed form for every cell and target.

    ``closed_form_offset`` shifts every closed-form value; it exists only as a
    negative control for the validation exit path.
    """
    cells = list(cells)
    for cfg in cells:
        if cfg.mode is not Mode.LINEAR_GAUSSIAN:
            raise ModelError("closed-form comparison needs linear_gaussian mode")
    args = [(k, cfg, targets, z_fail, closed_form_offset) for k, cfg in enumerate(cells)]
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _compare_cell(*a), args))
    else:
        parts = [_compare_cell(*a) for a in args]
    return [row for part in parts for row in part]
