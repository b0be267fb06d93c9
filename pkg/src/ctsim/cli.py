"""ctsim command-line interface.

Exit codes: 0 success, 1 I/O failure, 2 invalid flags/config/input,
3 validation failure (Monte Carlo mismatch or irreversibility violation).
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import analytics, inference, threestate
from . import io as cio
from .model import BehaviorParams, ModelError, PriorSpec, ProcessParams

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _emit(text: str, out) -> None:
    if out:
        cio.atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_behavior(p, xi_default=1.0):
    p.add_argument("--beta", type=float, required=True, help="stereotype weight in [0, 1]")
    p.add_argument("--xi", type=float, default=xi_default, help="Aware report accuracy in [1/2, 1]")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="S -> A intensity")


def _add_thresholds(p):
    p.add_argument("--tau-kts", type=int, default=7, help="knowledge-score threshold")
    p.add_argument("--min-per-side", type=int, default=1, help="reasons required on each side")
    p.add_argument("--total", type=int, default=3, help="reasons required in total")
    p.add_argument("--grade-mode", choices=["majority", "unanimity"], default="majority")
    p.add_argument("--kts-strict", action="store_true", help="use KTS > tau instead of >=")


def _thresholds(a) -> inference.ClassificationThresholds:
    return inference.ClassificationThresholds(a.tau_kts, a.min_per_side, a.total,
                                              a.grade_mode, a.kts_strict)


def _load_subjects(path):
    recs = cio.read_subjects_csv(path)
    if not recs:
        _warn(f"{path}: no subject records")
    return recs


# ---------------------------------------------------------------- model commands

def cmd_welfare(a) -> int:
    if a.steps < 1:
        raise CliError("--steps must be >= 1")
    if not a.t_max >= 0:
        raise CliError("--t-max must be nonnegative")
    bp = BehaviorParams(a.beta, a.xi)
    proc = ProcessParams(a.lam, a.nu)
    pr = PriorSpec(a.mu_p, a.sigma_p, a.mu_s, a.sigma_s)
    ts = np.linspace(0.0, a.t_max, a.steps) if a.steps > 1 else np.array([0.0])
    rows = [(r.t, r.eta_s, r.w_p, r.w_i, r.bias)
            for r in analytics.welfare_curve(bp, pr, proc, ts)]
    _emit(cio.csv_text(("t", "eta_s", "w_p", "w_i", "bias"), rows), a.out)
    return EXIT_OK


def cmd_regime(a) -> int:
    bp = BehaviorParams(a.beta, a.xi)
    res = analytics.classify_regime(bp, PriorSpec.equal(a.mu, a.sigma), a.lam)
    line = f"{res.regime.value}, threshold_eta={cio.fmt(res.threshold_eta)}"
    if res.t_max is not None:
        line += f", t_max={cio.fmt(res.t_max)}"
    print(line)
    return EXIT_OK


def _variance(sd, var, name):
    if sd is not None and var is not None:
        raise CliError(f"give --sigma-{name} or --var-{name}, not both")
    if var is not None:
        if var < 0:
            raise CliError(f"--var-{name} must be nonnegative")
        return math.sqrt(var)
    return 1.0 if sd is None else sd


def cmd_zerobias(a) -> int:
    bp = BehaviorParams(a.beta, a.xi)
    pr = PriorSpec(a.mu, _variance(a.sigma_p, a.var_p, "p"), a.mu, _variance(a.sigma_s, a.var_s, "s"))
    t = analytics.zero_bias_time(bp, pr, a.lam)
    print("none: condition violated" if t is None else f"t* = {cio.fmt(t)}")
    return EXIT_OK


# ---------------------------------------------------------------- monte carlo

COMPARISON_HEADER = ("cell", "beta", "xi", "t", "eta_s", "target", "closed", "mc",
                     "std_error", "z", "status")


def cmd_simulate(a) -> int:
    from .montecarlo import compare_mc_closed_form

    try:
        cfg = cio.load_config(a.config, seed_override=a.seed)
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_IO)
    except cio.ConfigError as exc:
        raise CliError(str(exc))
    workers = a.workers if a.workers is not None else cfg.mc.workers
    offset = cfg.mc.closed_form_offset if a.closed_form_offset is None else a.closed_form_offset
    try:
        cells = cfg.cells()
    except cio.ConfigError as exc:
        raise CliError(str(exc))
    rows = compare_mc_closed_form(cells, cfg.mc.targets, z_fail=cfg.mc.z_fail,
                                  workers=workers, closed_form_offset=offset)
    text = cio.csv_text(COMPARISON_HEADER,
                        [(r.cell, r.beta, r.xi, r.t, r.eta_s, r.target.value, r.closed, r.mc,
                          r.std_error, r.z, r.status) for r in rows])
    _emit(text, a.out or cfg.io.get("out"))
    failed = [r for r in rows if r.flagged]
    if failed:
        print(f"validation failed: {len(failed)} of {len(rows)} comparisons exceed "
              f"|z| > {cio.fmt(cfg.mc.z_fail)}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# ---------------------------------------------------------------- pipeline

TABLE_HEADER = ("treatment", "s_to_s", "s_to_a", "a_to_a", "a_to_s")


def _table_rows(tt):
    return [(k, c.s_to_s, c.s_to_a, c.a_to_a, c.a_to_s) for k, c in tt.counts.items()]


def cmd_classify(a) -> int:
    recs = _load_subjects(a.subjects)
    tt = inference.transition_table(recs, _thresholds(a))
    _emit(cio.csv_text(TABLE_HEADER, _table_rows(tt)), a.out)
    return EXIT_OK


def _legend(name):
    return inference.NARROW_LEGEND if name == "narrow" else inference.WIDE_LEGEND


def estimate_report(tt, pooled=False, legend=inference.WIDE_LEGEND, exposure=None):
    """CSV of per-treatment estimates and pairwise tests plus a rendered matrix."""
    names = [n for n in tt.treatments()
             if tt[n].s_to_a + tt[n].s_to_s > 0]
    rows = []
    for n in names:
        e = inference.estimate_lambda_hat(tt, n)
        intensity = "" if exposure is None else inference.frequency_to_intensity(e.freq, exposure)
        rows.append(("lambda_hat", n, "", e.freq, e.se, e.n, intensity, ""))
    matrix = None
    if len(names) >= 2:
        matrix = inference.pairwise_tests(tt, names, pooled=pooled)
        for (i, j), t in matrix.tests.items():
            rows.append(("pair", i, j, t.diff, t.se, t.t_ratio, t.p_value, t.stars(legend)))
    header = ("kind", "treatment", "versus", "estimate", "se", "stat", "extra", "stars")
    return cio.csv_text(header, rows), matrix


def _source_table(a):
    if a.counts and a.subjects:
        raise CliError("give --counts or --subjects, not both")
    if a.counts:
        try:
            return cio.load_counts(a.counts)
        except OSError as exc:
            raise CliError(f"cannot read counts: {exc}", EXIT_IO)
        except cio.ConfigError as exc:
            raise CliError(str(exc))
    if a.subjects:
        return inference.transition_table(_load_subjects(a.subjects), _thresholds(a))
    raise CliError("one of --counts or --subjects is required")


def cmd_estimate(a) -> int:
    if a.exposure is not None and not a.exposure > 0:
        raise CliError("--exposure must be positive")
    tt = _source_table(a)
    inference.audit_irreversibility(tt)
    legend = _legend(a.legend)
    text, matrix = estimate_report(tt, pooled=a.pooled, legend=legend, exposure=a.exposure)
    _emit(text, a.out)
    if matrix is not None and a.out:
        print(matrix.render(legend))
    return EXIT_OK


def cmd_sweep(a) -> int:
    recs = _load_subjects(a.subjects)
    cells = inference.threshold_sweep(recs, a.kts, a.rc, mode=a.grade_mode,
                                      pooled=a.pooled, kts_strict=a.kts_strict)
    legend = _legend(a.legend)
    rows = []
    for c in cells:
        if c.matrix is None:
            rows.append((c.tau_kts, c.reason_counter, c.pre_aware, "", "", "", ""))
            continue
        for (i, j), t in c.matrix.tests.items():
            rows.append((c.tau_kts, c.reason_counter, c.pre_aware, i, j, t.t_ratio,
                         t.stars(legend)))
    header = ("tau_kts", "reason_counter", "pre_aware", "treatment", "versus", "t_ratio", "stars")
    _emit(cio.csv_text(header, rows), a.out)
    return EXIT_OK


# ---------------------------------------------------------------- three-state

def cmd_chain_shares(a) -> int:
    if a.steps < 1:
        raise CliError("--steps must be >= 1")
    cp = threestate.ChainParams(a.lambda1, a.lambda2)
    ts = np.linspace(0.0, a.t_max, a.steps) if a.steps > 1 else np.array([0.0])
    rows = []
    for t in ts:
        s = threestate.chain_shares(cp, float(t))
        rows.append((float(t), s.mu_s, s.mu_a, s.mu_t))
    _emit(cio.csv_text(("t", "mu_s", "mu_a", "mu_t"), rows), a.out)
    return EXIT_OK


def cmd_chain_identify(a) -> int:
    panel = threestate.read_panel_csv(a.panel)
    if not panel:
        _warn(f"{a.panel}: no panel records")
    est = threestate.identify_from_panel(panel)
    rows = []
    for name in ("beta_hat", "p_s_hat", "p_hat", "xi_hat_1", "xi_hat_0"):
        rows.append((name, getattr(est, name), est.se.get(name), est.failures.get(name, "")))
    if est.xi_hat_1 is not None and est.xi_hat_0 is not None:
        sym = threestate.symmetry_test(est.xi_hat_1, est.counts["a_given_1"],
                                       est.xi_hat_0, est.counts["a_given_0"])
        rows.append(("symmetry_z", sym.z, sym.p_value, "low_power" if sym.low_power else ""))
    _emit(cio.csv_text(("quantity", "value", "se", "note"), rows), a.out)
    return EXIT_OK


def cmd_chain_audit(a) -> int:
    tt = _source_table(a)
    inference.audit_irreversibility(tt)
    total = sum(sum(c.as_dict().values()) for c in tt.counts.values())
    print(f"ok: no backward transitions in {len(tt.counts)} table(s), {total} subjects")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ctsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("welfare", help="welfare and bias curves over time (CSV)")
    _add_behavior(p)
    p.add_argument("--nu", type=float, default=0.0, help="re-entry rate into S")
    p.add_argument("--mu-p", type=float, default=0.5)
    p.add_argument("--sigma-p", type=float, default=0.2)
    p.add_argument("--mu-s", type=float, default=0.5)
    p.add_argument("--sigma-s", type=float, default=0.2)
    p.add_argument("--t-max", type=float, default=5.0)
    p.add_argument("--steps", type=int, default=101)
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.set_defaults(func=cmd_welfare)

    p = sub.add_parser("regime", help="time profile of institutional welfare")
    _add_behavior(p)
    p.add_argument("--mu", type=float, default=0.5, help="common prior mean")
    p.add_argument("--sigma", type=float, default=0.2, help="common prior sd")
    p.set_defaults(func=cmd_regime)

    p = sub.add_parser("zerobias", help="earliest unbiased poll time")
    _add_behavior(p)
    p.add_argument("--mu", type=float, default=0.5, help="common prior mean")
    p.add_argument("--sigma-p", type=float)
    p.add_argument("--sigma-s", type=float)
    p.add_argument("--var-p", type=float)
    p.add_argument("--var-s", type=float)
    p.set_defaults(func=cmd_zerobias)

    p = sub.add_parser("simulate", help="Monte Carlo vs closed forms from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="overrides config and CTSIM_SEED")
    p.add_argument("--workers", type=int, help="threads (output does not depend on it)")
    p.add_argument("--out")
    p.add_argument("--closed-form-offset", type=float, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("classify", help="transition table from a subjects CSV")
    p.add_argument("--subjects", required=True)
    _add_thresholds(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("estimate", help="transition frequencies and pairwise tests")
    p.add_argument("--counts", help="counts JSON path or builtin name (two_state, three_state)")
    p.add_argument("--subjects")
    _add_thresholds(p)
    p.add_argument("--pooled", action="store_true", help="pooled-variance standard errors")
    p.add_argument("--legend", choices=["wide", "narrow"], default="wide")
    p.add_argument("--exposure", type=float, help="exposure time for intensity conversion")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="threshold robustness grid")
    p.add_argument("--subjects", required=True)
    p.add_argument("--kts", type=_int_list, default=[6, 7, 8])
    p.add_argument("--rc", type=_int_list, default=[2, 3], help="reason counter values")
    p.add_argument("--grade-mode", choices=["majority", "unanimity"], default="majority")
    p.add_argument("--kts-strict", action="store_true")
    p.add_argument("--pooled", action="store_true")
    p.add_argument("--legend", choices=["wide", "narrow"], default="wide")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    chain = sub.add_parser("chain", help="three-state S -> A -> T tools")
    csub = chain.add_subparsers(dest="chain_command", required=True)
    p = csub.add_parser("shares", help="state shares over time")
    p.add_argument("--lambda1", type=float, required=True)
    p.add_argument("--lambda2", type=float, required=True)
    p.add_argument("--t-max", type=float, default=5.0)
    p.add_argument("--steps", type=int, default=101)
    p.add_argument("--out")
    p.set_defaults(func=cmd_chain_shares)
    p = csub.add_parser("identify", help="panel estimators of beta, p_s, xi_A")
    p.add_argument("--panel", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_chain_identify)
    p = csub.add_parser("audit", help="check that no backward transitions occur")
    p.add_argument("--counts", help="counts JSON path or builtin name")
    p.add_argument("--subjects")
    _add_thresholds(p)
    p.set_defaults(func=cmd_chain_audit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except inference.IrreversibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except cio.CsvFormatError as exc:
        print("error: malformed CSV\n" + str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, inference.PipelineError, threestate.EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
