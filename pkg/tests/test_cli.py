import os

import pytest

from dualgrad.cli import main
from dualgrad.config import format_cell, load_config, parse_config_text, write_csv
from dualgrad.errors import InvalidConfig, IoError, ParseError
from dualgrad.svgplot import line_chart, read_csv


# ---------------------------------------------------------------------------
# config documents


def test_parse_key_value_document():
    values = parse_config_text("n_d = 8\nmode=exact\n# comment\n\nseed=3 # trailing\n")
    assert values == {"n_d": 8, "mode": "exact", "seed": 3}


def test_parse_aliases():
    values = parse_config_text("d=256\nk=3\nmaster=9\nrepetitions=4")
    assert values == {"feature_dim": 256, "k_leads": 3, "seed": 9, "reps": 4}


def test_parse_rejects_unknown_key():
    with pytest.raises(InvalidConfig):
        parse_config_text("learning_rate=0.1")


def test_parse_rejects_malformed_line():
    with pytest.raises(ParseError):
        parse_config_text("just a line without equals")


def test_parse_bool_coercion():
    assert parse_config_text("paired=true")["paired"] is True
    assert parse_config_text("paired=0")["paired"] is False
    with pytest.raises(InvalidConfig):
        parse_config_text("paired=maybe")


def test_precedence_flags_over_file_over_defaults(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("seed=5\nn_d=9\n")
    cfg = load_config("equiv", str(path), {"seed": 7})
    assert cfg.seed == 7  # flag wins
    assert cfg.n_d == 9  # file wins over default
    assert cfg.d_i == 8  # default survives


def test_kind_defaults_applied():
    cfg = load_config("fig7", None, {})
    assert (cfg.d_i, cfg.d_o, cfg.n_t, cfg.k_leads) == (11, 1, 15, 2)


def test_seed_env_fallback(monkeypatch):
    monkeypatch.setenv("DUALGRAD_SEED", "123")
    assert load_config("equiv", None, {}).seed == 123
    # explicit flag beats the environment
    assert load_config("equiv", None, {"seed": 4}).seed == 4


def test_load_config_validation(tmp_path):
    with pytest.raises(InvalidConfig):
        load_config("equiv", None, {"reps": 0})
    with pytest.raises(InvalidConfig):
        load_config("equiv", None, {"mode": "both"})
    with pytest.raises(InvalidConfig):
        load_config("equiv", None, {"schedule": "sgd"})
    with pytest.raises(IoError):
        load_config("equiv", str(tmp_path / "missing.cfg"), {})


def test_csv_format(tmp_path):
    path = tmp_path / "out.csv"
    write_csv(str(path), ["a", "b"], [[1, 0.5], [2, True]])
    raw = path.read_bytes()
    assert raw == b"a,b\n1,0.5\n2,1\n"
    assert format_cell(1 / 3) == repr(1 / 3)


# ---------------------------------------------------------------------------
# CLI subcommands (in-process)


def test_equiv_writes_csv_with_schema(tmp_path, capsys):
    out = tmp_path / "equiv.csv"
    assert main(["equiv", "--reps", "2", "--seed", "1", "--out", str(out)]) == 0
    header, rows = read_csv(str(out))
    assert header == ["seed", "n_d", "step", "se", "schedule", "mode"]
    assert rows and all(len(r) == 6 for r in rows)


def test_cli_determinism_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for cmd in (
        ["equiv", "--reps", "2", "--seed", "3"],
        ["optimize", "--seed", "3"],
    ):
        assert main(cmd + ["--out", str(a)]) == 0
        assert main(cmd + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


def test_fig7_summary(capsys):
    assert main(["fig7", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "good: hit_position=1" in out
    assert "bad: hit_position=3" in out


def test_props_pass_and_fault_injection(tmp_path, capsys):
    assert main(["props"]) == 0
    assert "PASS dual" in capsys.readouterr().out
    cfg = tmp_path / "fault.cfg"
    cfg.write_text("inject_fault=grad-sign\n")
    assert main(["props", "--config", str(cfg)]) == 1
    assert "FAIL dual" in capsys.readouterr().out


def test_optimize_csv_schema(tmp_path):
    out = tmp_path / "opt.csv"
    assert main(["optimize", "--seed", "2", "--out", str(out)]) == 0
    header, rows = read_csv(str(out))
    assert header == [
        "iteration", "path", "effect_d", "similarity", "collapse", "perturbed", "demo_id",
    ]
    assert all(r[4] in ("0", "1") and r[5] in ("0", "1") for r in rows)


def test_generate_emits_rows(capsys):
    assert main(["generate", "--seed", "0"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "step,position,token_id"
    assert len(lines) == 6  # header + five steps


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense=1\n")
    assert main(["equiv", "--config", str(cfg)]) == 2
    assert main(["equiv", "--reps", "0"]) == 2


def test_unwritable_out_exits_3(tmp_path):
    assert main(["equiv", "--reps", "1", "--out", str(tmp_path / "no" / "dir.csv")]) == 3


def test_missing_config_file_exits_3(tmp_path):
    assert main(["equiv", "--config", str(tmp_path / "nope.cfg")]) == 3


def test_plot_produces_svg(tmp_path, capsys):
    csv = tmp_path / "data.csv"
    assert main(["equiv", "--reps", "2", "--seed", "1", "--out", str(csv)]) == 0
    assert main(["plot", str(csv)]) == 0
    svg = (tmp_path / "data.csv.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_plot_missing_column_exits_2(tmp_path):
    csv = tmp_path / "data.csv"
    csv.write_text("a,b\n1,2\n")
    assert main(["plot", str(csv)]) == 2


# ---------------------------------------------------------------------------
# SVG rendering


def test_line_chart_deterministic_and_grouped():
    header = ["step", "se", "seed"]
    rows = [["1", "0.5", "a"], ["2", "0.1", "a"], ["1", "0.6", "b"], ["2", "0.2", "b"]]
    one = line_chart(header, rows, "step", "se", "seed")
    two = line_chart(header, rows, "step", "se", "seed")
    assert one == two
    assert one.count("<polyline") == 2


def test_line_chart_rejects_bad_input():
    from dualgrad.errors import EmptyData

    with pytest.raises(EmptyData):
        line_chart(["x", "y"], [], "x", "y", None)
    with pytest.raises(ParseError):
        line_chart(["x", "y"], [["1", "oops"]], "x", "y", None)


def test_read_csv_validates_row_lengths(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1\n")
    with pytest.raises(ParseError):
        read_csv(str(path))
