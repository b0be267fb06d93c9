"""Empirical pipeline: classify subjects, tabulate transitions, test formats.

Subjects are classified Stereotype/Aware before treatment with a
three-pronged rule (knowledge score, familiarity, listed reasons) and after
treatment from the graders' pass/fail verdicts.  The S -> A frequency per
treatment is compared across treatments with unpooled two-proportion
t-ratios.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction

import numpy as np

from .model import ModelError, State
from .threestate import normal_two_sided_p


class PipelineError(ValueError):
    pass


class IrreversibilityError(PipelineError):
    """Subjects (or counts) moving backwards out of an absorbing state."""

    def __init__(self, message: str, subject_ids=(), cells=None):
        super().__init__(message)
        self.subject_ids = list(subject_ids)
        self.cells = dict(cells or {})


class Treatment(str, enum.Enum):
    NEWSPAPER = "newspaper"
    TWITTER = "twitter"
    FACEBOOK = "facebook"
    PARTISAN_TWITTER = "partisan_twitter"


class Grade(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"


class GradeMode(str, enum.Enum):
    MAJORITY = "majority"
    UNANIMITY = "unanimity"


class Metric(str, enum.Enum):
    NFC = "nfc"
    CFS = "cfs"
    AI_GRADE = "ai_grade"


_METRIC_FIELD = {Metric.NFC: "nfc_score", Metric.CFS: "cfs_score", Metric.AI_GRADE: "ai_grade"}

# population average of the cognitive flexibility scale
CFS_POPULATION_MEAN = 55.0

WIDE_LEGEND = (0.1, 0.05, 0.01)
NARROW_LEGEND = (0.05, 0.01, 0.001)


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    treatment: Treatment
    kts_score: int
    familiarity: int
    reasons_own: int
    reasons_opp: int
    grades: tuple[Grade, ...] = ()
    nfc_score: float | None = None
    cfs_score: float | None = None
    ai_grade: float | None = None
    internal_uncertainty: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "treatment", Treatment(self.treatment))
        object.__setattr__(self, "grades", tuple(Grade(g) for g in self.grades))
        if not 0 <= self.kts_score <= 10:
            raise ModelError(f"kts_score must lie in [0, 10], got {self.kts_score}")
        if self.familiarity not in (0, 1):
            raise ModelError("familiarity must be 0 or 1")
        if self.reasons_own < 0 or self.reasons_opp < 0:
            raise ModelError("reason counts must be nonnegative")


@dataclass(frozen=True)
class ClassificationThresholds:
    """Pre/post classification rule.

    A subject is Aware before treatment iff the knowledge score reaches
    ``tau_kts`` (``>`` instead of ``>=`` when ``kts_strict``), familiarity is
    1, both sides list at least ``min_per_side`` reasons and the two sides
    together list at least ``total``.
    """

    tau_kts: int = 7
    min_per_side: int = 1
    total: int = 3
    grade_mode: GradeMode = GradeMode.MAJORITY
    kts_strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "grade_mode", GradeMode(self.grade_mode))
        if not 0 <= self.tau_kts <= 10:
            raise ModelError("tau_kts must lie in [0, 10]")
        if self.min_per_side < 0 or self.total < 0:
            raise ModelError("reason thresholds must be nonnegative")

    @classmethod
    def from_reason_counter(cls, tau_kts: int, reason_counter: int, **kw):
        """One reason on one side plus ``reason_counter`` on the other."""
        return cls(tau_kts=tau_kts, min_per_side=1, total=1 + reason_counter, **kw)


_CELLS = ("s_to_s", "s_to_a", "s_to_t", "a_to_s", "a_to_a", "a_to_t",
          "t_to_s", "t_to_a", "t_to_t")
BACKWARD_CELLS = ("a_to_s", "t_to_s", "t_to_a")


@dataclass(frozen=True)
class TransitionCounts:
    s_to_s: int = 0
    s_to_a: int = 0
    a_to_a: int = 0
    s_to_t: int = 0
    a_to_t: int = 0
    t_to_t: int = 0
    a_to_s: int = 0
    t_to_s: int = 0
    t_to_a: int = 0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ModelError(f"{f.name} must be nonnegative")

    def backward(self) -> dict[str, int]:
        return {c: getattr(self, c) for c in BACKWARD_CELLS if getattr(self, c) > 0}

    def as_dict(self) -> dict[str, int]:
        return {c: getattr(self, c) for c in _CELLS}


@dataclass(frozen=True)
class TransitionTable:
    counts: dict[str, TransitionCounts] = field(default_factory=dict)

    def __getitem__(self, treatment) -> TransitionCounts:
        return self.counts[_key(treatment)]

    def treatments(self) -> list[str]:
        return list(self.counts)


@dataclass(frozen=True)
class LambdaEstimate:
    freq: float
    n: int
    se: float
    transitions: int

    def as_fraction(self) -> Fraction:
        return Fraction(self.transitions, self.n)


@dataclass(frozen=True)
class TwoPropTest:
    diff: float
    se: float
    t_ratio: float
    p_value: float

    def stars(self, legend=WIDE_LEGEND) -> str:
        return significance_stars(self.p_value, legend)


def _key(treatment) -> str:
    return treatment.value if isinstance(treatment, Treatment) else str(treatment)


def significance_stars(p_value: float, legend=WIDE_LEGEND) -> str:
    return "*" * sum(p_value < cut for cut in legend)


def aggregate_grades(grades, mode: GradeMode = GradeMode.MAJORITY) -> Grade:
    grades = [Grade(g) for g in grades]
    if not grades:
        raise PipelineError("cannot aggregate an empty grade list")
    passes = sum(g is Grade.PASS for g in grades)
    if GradeMode(mode) is GradeMode.UNANIMITY:
        return Grade.PASS if passes == len(grades) else Grade.FAIL
    # ties go to Fail
    return Grade.PASS if passes > len(grades) - passes else Grade.FAIL


def classify_pre(r: SubjectRecord, th: ClassificationThresholds) -> State:
    kts_ok = r.kts_score > th.tau_kts if th.kts_strict else r.kts_score >= th.tau_kts
    reasons_ok = (min(r.reasons_own, r.reasons_opp) >= th.min_per_side
                  and r.reasons_own + r.reasons_opp >= th.total)
    return State.A if kts_ok and r.familiarity == 1 and reasons_ok else State.S


def classify_post(r: SubjectRecord, th: ClassificationThresholds) -> State:
    if not r.grades:
        raise PipelineError(f"subject {r.subject_id}: no grades for post-treatment classification")
    return State.A if aggregate_grades(r.grades, th.grade_mode) is Grade.PASS else State.S


def transition_table(records, th: ClassificationThresholds) -> TransitionTable:
    """Per-treatment counts of (pre-state, post-state).

    Raises IrreversibilityError listing every subject classified Aware
    before treatment and Stereotype after it.
    """
    tallies: dict[str, dict[str, int]] = {}
    offenders = []
    for r in records:
        pre, post = classify_pre(r, th), classify_post(r, th)
        cell = f"{pre.value.lower()}_to_{post.value.lower()}"
        if cell == "a_to_s":
            offenders.append(r.subject_id)
        bucket = tallies.setdefault(r.treatment.value, dict.fromkeys(("s_to_s", "s_to_a", "a_to_a", "a_to_s"), 0))
        bucket[cell] += 1
    if offenders:
        raise IrreversibilityError(
            f"{len(offenders)} subject(s) moved A -> S: {', '.join(offenders)}",
            subject_ids=offenders)
    order = [t.value for t in Treatment]
    return TransitionTable({k: TransitionCounts(**tallies[k])
                            for k in sorted(tallies, key=order.index)})


def audit_irreversibility(tt: TransitionTable) -> None:
    bad = {k: c.backward() for k, c in tt.counts.items() if c.backward()}
    if bad:
        desc = "; ".join(f"{k}: {v}" for k, v in bad.items())
        raise IrreversibilityError(f"backward transitions present ({desc})", cells=bad)


def estimate_lambda_hat(tt: TransitionTable, treatment) -> LambdaEstimate:
    c = tt[treatment]
    n = c.s_to_a + c.s_to_s
    if n == 0:
        raise PipelineError(f"{_key(treatment)}: no subjects started in S")
    f = c.s_to_a / n
    return LambdaEstimate(f, n, math.sqrt(f * (1.0 - f) / n), c.s_to_a)


def two_prop_test(f1: float, n1: int, f2: float, n2: int, pooled: bool = False) -> TwoPropTest:
    """Difference of two proportions with its t-ratio.

    The default unpooled standard error is the one that reproduces the
    published t-ratios; ``pooled=True`` uses the common-proportion variance.
    """
    if n1 <= 0 or n2 <= 0:
        raise PipelineError("both sample sizes must be positive")
    diff = f1 - f2
    if pooled:
        pbar = (f1 * n1 + f2 * n2) / (n1 + n2)
        se = math.sqrt(pbar * (1.0 - pbar) * (1.0 / n1 + 1.0 / n2))
    else:
        se = math.sqrt(f1 * (1.0 - f1) / n1 + f2 * (1.0 - f2) / n2)
    if se == 0.0:
        t = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        t = diff / se
    return TwoPropTest(diff, se, t, normal_two_sided_p(t))


@dataclass(frozen=True)
class PairwiseMatrix:
    treatments: tuple[str, ...]
    tests: dict[tuple[str, str], TwoPropTest]

    def get(self, i, j) -> TwoPropTest:
        i, j = _key(i), _key(j)
        if (i, j) in self.tests:
            return self.tests[(i, j)]
        t = self.tests[(j, i)]
        return TwoPropTest(-t.diff, t.se, -t.t_ratio, t.p_value)

    def significant(self, legend=WIDE_LEGEND) -> list[tuple[str, str]]:
        return [pair for pair, t in self.tests.items() if t.p_value < max(legend)]

    def render(self, legend=WIDE_LEGEND, digits: int = 3) -> str:
        names = self.treatments
        width = max(12, *(len(n) + 2 for n in names))
        lines = ["".ljust(width) + "".join(n.rjust(width) for n in names)]
        for a, row in enumerate(names):
            top, bottom = row.ljust(width), "".ljust(width)
            for b, col in enumerate(names):
                if b <= a:
                    top += ".".rjust(width)
                    bottom += "".rjust(width)
                else:
                    t = self.tests[(row, col)]
                    top += f"{t.t_ratio:.{digits}f}{t.stars(legend)}".rjust(width)
                    bottom += f"({t.se:.{digits}f})".rjust(width)
            lines += [top, bottom]
        cut = ", ".join(f"{'*' * (k + 1)} p<{c:g}" for k, c in enumerate(legend))
        lines.append(f"standard errors in parentheses; {cut}")
        return "\n".join(lines)


def pairwise_tests(tt: TransitionTable, treatments=None, pooled: bool = False) -> PairwiseMatrix:
    names = tuple(_key(t) for t in (treatments or tt.treatments()))
    if len(names) < 2:
        raise PipelineError("pairwise tests need at least two treatments")
    est = {n: estimate_lambda_hat(tt, n) for n in names}
    tests = {}
    for i, j in itertools.combinations(range(len(names)), 2):
        a, b = est[names[i]], est[names[j]]
        tests[(names[i], names[j])] = two_prop_test(a.freq, a.n, b.freq, b.n, pooled=pooled)
    return PairwiseMatrix(names, tests)


@dataclass(frozen=True)
class Split:
    high: list
    low: list
    cut: float

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.high), len(self.low)


def subgroup_split(records, metric: Metric, cut="mean") -> Split:
    """Partition into ``score >= cut`` and ``score < cut``.

    ``cut`` is ``"mean"`` for the sample average or a fixed number (e.g.
    ``CFS_POPULATION_MEAN``).
    """
    attr = _METRIC_FIELD[Metric(metric)]
    records = list(records)
    missing = [r.subject_id for r in records if getattr(r, attr) is None]
    if missing:
        raise PipelineError(f"{attr} missing for subject(s) {', '.join(missing)}")
    scores = [float(getattr(r, attr)) for r in records]
    if isinstance(cut, str):
        if cut != "mean":
            raise PipelineError(f"unknown cut {cut!r}")
        value = float(np.mean(scores)) if scores else math.nan
    else:
        value = float(cut)
    high = [r for r, s in zip(records, scores) if s >= value]
    low = [r for r, s in zip(records, scores) if s < value]
    return Split(high, low, value)


@dataclass(frozen=True)
class SweepCell:
    tau_kts: int
    reason_counter: int
    thresholds: ClassificationThresholds
    table: TransitionTable
    matrix: PairwiseMatrix | None

    @property
    def pre_aware(self) -> int:
        return sum(c.a_to_a + c.a_to_s for c in self.table.counts.values())

    def significant_pairs(self, legend=WIDE_LEGEND) -> list[tuple[str, str]]:
        return self.matrix.significant(legend) if self.matrix else []


def threshold_sweep(records, kts_grid, reason_grid, mode: GradeMode = GradeMode.MAJORITY,
                    treatments=None, pooled: bool = False, kts_strict: bool = False) -> list[SweepCell]:
    kts_grid, reason_grid = list(kts_grid), list(reason_grid)
    if not kts_grid or not reason_grid:
        raise PipelineError("sweep grids must be nonempty")
    records = list(records)
    cells = []
    for tau in kts_grid:
        for rc in reason_grid:
            th = ClassificationThresholds.from_reason_counter(tau, rc, grade_mode=mode,
                                                              kts_strict=kts_strict)
            tt = transition_table(records, th)
            names = treatments or tt.treatments()
            matrix = pairwise_tests(tt, names, pooled=pooled) if len(names) >= 2 else None
            cells.append(SweepCell(tau, rc, th, tt, matrix))
    return cells


def frequency_to_intensity(freq: float, exposure: float) -> float:
    """Continuous-time hazard whose exposure-period transition probability is ``freq``."""
    if not exposure > 0:
        raise PipelineError("exposure must be positive")
    if not 0.0 <= freq < 1.0:
        raise PipelineError(f"frequency must lie in [0, 1), got {freq}")
    return -math.log1p(-freq) / exposure


def intensity_se(est: LambdaEstimate, exposure: float) -> float:
    """Delta-method standard error of ``frequency_to_intensity``."""
    return est.se / ((1.0 - est.freq) * exposure)


def synthetic_records(n_per_treatment: int, transition_prob: dict, rng: np.random.Generator,
                      aware_share: float = 0.1, n_graders: int = 3,
                      grader_noise: float = 0.15,
                      aware_rule: ClassificationThresholds | None = None) -> list[SubjectRecord]:
    """Subject records whose post-treatment grades follow a known S -> A probability.

    Subjects who meet ``aware_rule`` start Aware and always pass all graders.
    It defaults to the loosest rule of the usual robustness grid (KTS >= 6,
    one reason per side, three in total), so no stricter rule can produce a
    backward move.  Other
    subjects become Aware with ``transition_prob[treatment]``; an Aware essay
    gets one dissenting Fail with probability ``grader_noise`` and a
    Stereotype essay one dissenting Pass with the same probability.
    """
    if aware_rule is None:
        aware_rule = ClassificationThresholds(tau_kts=6, min_per_side=1, total=3)
    out = []
    sid = 0
    for tr, prob in transition_prob.items():
        tr = Treatment(tr)
        for _ in range(n_per_treatment):
            if rng.random() < aware_share:
                kts = int(rng.integers(aware_rule.tau_kts, 11))
                fam, own, opp = 1, int(rng.integers(2, 5)), int(rng.integers(2, 5))
            else:
                kts = int(rng.integers(0, 11))
                fam = int(rng.random() < 0.5)
                own, opp = int(rng.integers(0, 4)), int(rng.integers(0, 4))
            rec = SubjectRecord(str(sid), tr, kts, fam, own, opp,
                                nfc_score=round(float(rng.normal(3.0, 0.6)), 3),
                                cfs_score=round(float(rng.normal(55.0, 6.0)), 1),
                                ai_grade=round(float(rng.uniform(20, 100)), 1))
            if classify_pre(rec, aware_rule) is State.A:
                grades = [Grade.PASS] * n_graders
            else:
                aware = rng.random() < prob
                base = Grade.PASS if aware else Grade.FAIL
                other = Grade.FAIL if aware else Grade.PASS
                grades = [base] * n_graders
                if rng.random() < grader_noise:
                    grades[int(rng.integers(n_graders))] = other
            out.append(replace(rec, grades=tuple(grades)))
            sid += 1
    return out
