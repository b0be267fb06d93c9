import json

import numpy as np
import pytest

from ctsim.inference import ClassificationThresholds, synthetic_records
from ctsim.io import (
    ConfigError,
    CsvFormatError,
    atomic_write_text,
    counts_json_text,
    csv_text,
    fmt,
    load_counts,
    parse_config,
    read_subjects_csv,
    write_counts,
    write_subjects_csv,
)
from ctsim.montecarlo import Mode, Target


def test_fmt_fixed_precision():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(-0.0) == "0"
    assert fmt(3) == "3" and fmt(None) == "" and fmt(True) == "1"
    assert fmt(Target.WP) == "WP"
    assert fmt(1e-20) == "1e-20"


def test_csv_text_layout():
    assert csv_text(("a", "b"), [(1, 0.5), (2, None)]) == "a,b\n1,0.5\n2,\n"


def test_atomic_write_leaves_no_temp(tmp_path):
    path = tmp_path / "out.csv"
    atomic_write_text(path, "x\n")
    atomic_write_text(path, "y\n")
    assert path.read_text() == "y\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]


def test_atomic_write_missing_directory(tmp_path):
    with pytest.raises(OSError):
        atomic_write_text(tmp_path / "nope" / "out.csv", "x")


def test_config_defaults_and_sections():
    cfg = parse_config({"model": {"beta": 0.3, "xi": 0.6, "lambda": 2.0},
                        "mc": {"mode": "microfounded", "agents": 10, "targets": ["WP"]},
                        "pipeline": {"grade_mode": "unanimity"}}, env={})
    assert cfg.behavior.beta == 0.3 and cfg.process.lam == 2.0
    assert cfg.mc.mode is Mode.MICROFOUNDED and cfg.mc.targets == (Target.WP,)
    assert cfg.pipeline == ClassificationThresholds(grade_mode="unanimity")
    assert cfg.cells()[0].agents == 10


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"model": {"beta": 1.5}},
    {"model": {"xi": 0.2}},
    {"mc": {"replications": 0}},
    {"mc": {"grid": {"beta": [0.5], "colour": [1]}}},
    {"pipeline": {"tau_kts": 11}},
    {"model": {"lambda": 1.0, "nu": 2.0}},
])
def test_config_rejects_bad_values(data):
    with pytest.raises(ConfigError):
        parse_config(data, env={})


def test_seed_precedence():
    data = {"mc": {"seed": 1}}
    assert parse_config(data, env={}).mc.seed == 1
    assert parse_config(data, env={"CTSIM_SEED": "2"}).mc.seed == 2
    assert parse_config(data, seed_override=3, env={"CTSIM_SEED": "2"}).mc.seed == 3
    with pytest.raises(ConfigError):
        parse_config(data, env={"CTSIM_SEED": "x"})


def test_grid_cells_from_config():
    cfg = parse_config({"mc": {"grid": {"beta": [0.25, 0.5], "xi": [1.0], "eta_s": [0.2, 0.9]}}},
                       env={})
    assert len(cfg.cells()) == 4
    cfg = parse_config({"mc": {"grid": {"t": [0.0, 1.0]}}}, env={})
    assert [c.t for c in cfg.cells()] == [0.0, 1.0]
    with pytest.raises(ConfigError):
        parse_config({"mc": {"grid": {"t": [0.0], "eta_s": [0.5]}}}, env={}).cells()


def test_subjects_round_trip(tmp_path):
    recs = synthetic_records(20, {"newspaper": 0.3, "facebook": 0.4}, np.random.default_rng(0))
    path = tmp_path / "subjects.csv"
    write_subjects_csv(path, recs)
    assert read_subjects_csv(path) == recs


def test_subjects_bad_rows_report_line_numbers(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text(
        "subject_id,treatment,kts_score,familiarity,reasons_own,reasons_opp,grade_1\n"
        "1,newspaper,8,1,2,2,pass\n"
        "2,radio,8,1,2,2,pass\n"
        "3,twitter,x,1,2,2,pass\n"
        "4,twitter,5,1,2,2,maybe\n")
    with pytest.raises(CsvFormatError) as err:
        read_subjects_csv(path)
    assert [e.split(":")[0] for e in err.value.errors] == ["line 3", "line 4", "line 5"]


def test_subjects_missing_columns_and_empty(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("subject_id,treatment\n")
    with pytest.raises(CsvFormatError):
        read_subjects_csv(path)
    path.write_text("")
    assert read_subjects_csv(path) == []


def test_counts_round_trip(tmp_path):
    tt = load_counts("two_state")
    path = tmp_path / "c.json"
    write_counts(path, tt)
    assert load_counts(path) == tt
    assert json.loads(counts_json_text(tt))["treatments"]["twitter"]["s_to_a"] == 43


def test_counts_malformed(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"treatments": {"x": {"s_to_s": -1}}}')
    with pytest.raises(ConfigError):
        load_counts(path)
    path.write_text('{"rows": []}')
    with pytest.raises(ConfigError):
        load_counts(path)
