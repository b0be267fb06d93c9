"""File formats: run configs, subject CSVs, count fixtures and CSV output."""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .inference import (
    ClassificationThresholds,
    Grade,
    SubjectRecord,
    TransitionCounts,
    TransitionTable,
    Treatment,
)
from .model import BehaviorParams, ModelError, PriorSpec, ProcessParams
from .montecarlo import McConfig, Mode, Target, grid_cells

SEED_ENV = "CTSIM_SEED"
BUILTIN_COUNTS = {"two_state": "two_state_counts.json", "three_state": "three_state_counts.json"}


class CsvFormatError(ValueError):
    """Malformed CSV input; ``errors`` holds one ``line N: ...`` message per bad row."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    """Fixed 12-significant-digit rendering used by every CSV writer."""
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        s = f"{x:.12g}"
        return "0" if s == "-0" else s
    return str(getattr(x, "value", x))


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".",
                               prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    atomic_write_text(path, csv_text(header, rows))


# ---------------------------------------------------------------- config

_NUM = {"type": "number"}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_NUM_LIST = {"type": "array", "items": _NUM, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta": _PROB,
                "xi": {"type": "number", "minimum": 0.5, "maximum": 1},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "nu": {"type": "number", "minimum": 0},
            },
        },
        "priors": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mu_p": _NUM,
                "sigma_p": {"type": "number", "minimum": 0},
                "mu_s": _NUM,
                "sigma_s": {"type": "number", "minimum": 0},
            },
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": [m.value for m in Mode]},
                "replications": {"type": "integer", "minimum": 1},
                "agents": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "workers": {"type": "integer", "minimum": 1},
                "block_size": {"type": "integer", "minimum": 1},
                "t": {"type": "number", "minimum": 0},
                "targets": {"type": "array", "items": {"enum": [t.value for t in Target]},
                            "minItems": 1},
                "z_fail": {"type": "number", "exclusiveMinimum": 0},
                "closed_form_offset": _NUM,
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "beta": {"type": "array", "items": _PROB, "minItems": 1},
                        "xi": {"type": "array", "minItems": 1,
                               "items": {"type": "number", "minimum": 0.5, "maximum": 1}},
                        "eta_s": {"type": "array", "items": _PROB, "minItems": 1},
                        "t": {"type": "array", "minItems": 1,
                              "items": {"type": "number", "minimum": 0}},
                    },
                },
            },
        },
        "pipeline": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau_kts": {"type": "integer", "minimum": 0, "maximum": 10},
                "min_per_side": {"type": "integer", "minimum": 0},
                "total": {"type": "integer", "minimum": 0},
                "grade_mode": {"enum": ["majority", "unanimity"]},
                "kts_strict": {"type": "boolean"},
            },
        },
        "io": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "subjects": {"type": "string"},
                "counts": {"type": "string"},
                "out": {"type": "string"},
            },
        },
    },
}


@dataclass(frozen=True)
class McSection:
    mode: Mode = Mode.LINEAR_GAUSSIAN
    replications: int = 10_000
    agents: int = 1_000
    seed: int = 0
    workers: int = 1
    block_size: int = 8192
    t: float = 0.0
    targets: tuple[Target, ...] = (Target.WP, Target.WI, Target.BIAS)
    z_fail: float = 4.0
    closed_form_offset: float = 0.0
    grid: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    behavior: BehaviorParams
    process: ProcessParams
    prior: PriorSpec
    mc: McSection
    pipeline: ClassificationThresholds
    io: dict

    def base_mc(self) -> McConfig:
        m = self.mc
        return McConfig(self.behavior, self.process, self.prior, t=m.t,
                        replications=m.replications, mode=m.mode, agents=m.agents,
                        seed=m.seed, block_size=m.block_size)

    def cells(self) -> list[McConfig]:
        """Grid cells, or the single base configuration when no grid is given."""
        base = self.base_mc()
        g = self.mc.grid
        if not g:
            return [base]
        betas = g.get("beta", [self.behavior.beta])
        xis = g.get("xi", [self.behavior.xi])
        if "eta_s" in g and "t" in g:
            raise ConfigError("mc.grid: give eta_s or t, not both")
        if "eta_s" in g:
            return grid_cells(base, betas, xis, eta_s=g["eta_s"])
        return grid_cells(base, betas, xis, times=g.get("t", [self.mc.t]))


def parse_config(data: dict, seed_override: int | None = None, env=None) -> RunConfig:
    """Validate a config mapping and build a RunConfig.

    Seed precedence: config value < ``CTSIM_SEED`` environment variable <
    ``seed_override`` (the command-line flag).
    """
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None
    env = os.environ if env is None else env
    model, priors = data.get("model", {}), data.get("priors", {})
    mc = dict(data.get("mc", {}))
    if env.get(SEED_ENV, "").strip():
        try:
            mc["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    if seed_override is not None:
        mc["seed"] = seed_override
    if "targets" in mc:
        mc["targets"] = tuple(Target(t) for t in mc["targets"])
    if "mode" in mc:
        mc["mode"] = Mode(mc["mode"])
    try:
        cfg = RunConfig(
            behavior=BehaviorParams(model.get("beta", 0.5), model.get("xi", 1.0)),
            process=ProcessParams(model.get("lambda", 1.0), model.get("nu", 0.0)),
            prior=PriorSpec(priors.get("mu_p", 0.5), priors.get("sigma_p", 0.2),
                            priors.get("mu_s", 0.5), priors.get("sigma_s", 0.2)),
            mc=McSection(**mc),
            pipeline=ClassificationThresholds(**data.get("pipeline", {})),
            io=dict(data.get("io", {})),
        )
        cfg.base_mc()
    except ModelError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path, seed_override: int | None = None, env=None) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data, seed_override=seed_override, env=env)


# ---------------------------------------------------------------- subjects

SUBJECT_REQUIRED = ("subject_id", "treatment", "kts_score", "familiarity",
                    "reasons_own", "reasons_opp")
SUBJECT_OPTIONAL = ("nfc_score", "cfs_score", "ai_grade", "internal_uncertainty")


def _grade_columns(names) -> list[str]:
    cols = [n for n in names if n.startswith("grade_") and n[6:].isdigit()]
    return sorted(cols, key=lambda n: int(n[6:]))


def _opt_float(s):
    s = (s or "").strip()
    return None if s == "" else float(s)


def read_subjects_csv(path) -> list[SubjectRecord]:
    records, errors = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = [c for c in SUBJECT_REQUIRED if c not in reader.fieldnames]
        if missing:
            raise CsvFormatError([f"line 1: missing columns {', '.join(missing)}"])
        grade_cols = _grade_columns(reader.fieldnames)
        for row in reader:
            try:
                grades = tuple(Grade(row[c].strip().lower()) for c in grade_cols
                               if (row[c] or "").strip())
                iu = (row.get("internal_uncertainty") or "").strip()
                records.append(SubjectRecord(
                    subject_id=row["subject_id"].strip(),
                    treatment=Treatment(row["treatment"].strip().lower()),
                    kts_score=int(row["kts_score"]),
                    familiarity=int(row["familiarity"]),
                    reasons_own=int(row["reasons_own"]),
                    reasons_opp=int(row["reasons_opp"]),
                    grades=grades,
                    nfc_score=_opt_float(row.get("nfc_score")),
                    cfs_score=_opt_float(row.get("cfs_score")),
                    ai_grade=_opt_float(row.get("ai_grade")),
                    internal_uncertainty=None if iu == "" else int(iu),
                ))
            except (ValueError, TypeError, AttributeError) as exc:
                errors.append(f"line {reader.line_num}: {exc}")
    if errors:
        raise CsvFormatError(errors)
    return records


def subjects_csv_text(records) -> str:
    k = max((len(r.grades) for r in records), default=3)
    header = list(SUBJECT_REQUIRED) + [f"grade_{i + 1}" for i in range(k)] + list(SUBJECT_OPTIONAL)
    rows = []
    for r in records:
        grades = [g.value for g in r.grades] + [""] * (k - len(r.grades))
        rows.append([r.subject_id, r.treatment.value, r.kts_score, r.familiarity,
                     r.reasons_own, r.reasons_opp, *grades, r.nfc_score, r.cfs_score,
                     r.ai_grade, r.internal_uncertainty])
    return csv_text(header, rows)


def write_subjects_csv(path, records) -> None:
    atomic_write_text(path, subjects_csv_text(list(records)))


# ---------------------------------------------------------------- counts

def load_counts(source) -> TransitionTable:
    """Transition counts from a JSON file or a builtin fixture name."""
    key = str(source)
    if key in BUILTIN_COUNTS:
        text = resources.files("ctsim").joinpath("data", BUILTIN_COUNTS[key]).read_text()
    else:
        text = Path(source).read_text()
    try:
        data = json.loads(text)
        table = {name: TransitionCounts(**{k: int(v) for k, v in cells.items()})
                 for name, cells in data["treatments"].items()}
    except (json.JSONDecodeError, KeyError, TypeError, ModelError) as exc:
        raise ConfigError(f"{source}: malformed counts fixture ({exc})") from None
    return TransitionTable(table)


def counts_json_text(tt: TransitionTable) -> str:
    data = {"treatments": {k: c.as_dict() for k, c in tt.counts.items()}}
    return json.dumps(data, indent=2) + "\n"


def write_counts(path, tt: TransitionTable) -> None:
    atomic_write_text(path, counts_json_text(tt))
