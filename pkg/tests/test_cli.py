"""Command-line front end: flag parsing, config files, end-to-end runs."""

import numpy as np
import pytest

from fracshift import cli
from fracshift import experiments as ex
from fracshift.sparse import ArgumentError


@pytest.fixture(autouse=True)
def _fresh_caches():
    ex.clear_caches()
    yield
    ex.clear_caches()


def _read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def test_list_flag_parsers():
    assert cli._floats("1,0.5,0.25") == (1.0, 0.5, 0.25)
    assert cli._ints("8, 16") == (8, 16)
    assert cli._strs("f1,f3") == ("f1", "f3")


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        cli.main(["no-such-command"])


def test_convergence_roundtrip(tmp_path):
    out = tmp_path / "conv.csv"
    rc = cli.main([
        "convergence", "--operator", "a1", "--source", "f1",
        "--alpha", "0.5", "--mesh", "4,8", "--ref-mesh", "16",
        "--tau", "0.4", "--big-m", "40", "--big-n", "40",
        "--out", str(out),
    ])
    assert rc == 0
    header, rows = _read_csv(out)
    assert header == list(ex.CONVERGENCE_COLUMNS)
    assert [r[4] for r in rows] == ["4", "8"]
    assert float(rows[1][5]) < float(rows[0][5])


def test_config_file_with_flag_override(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(
        "# toy ladder\n"
        "operator = a1\n"
        "source = f1\n"
        "alpha = 0.3\n"
        "mesh = 4,8\n"
        "ref-mesh = 16\n"
        "tau = 0.4\n"
        "big-m = 40\n"
        "big-n = 40\n"
    )
    out = tmp_path / "conv.csv"
    rc = cli.main(["convergence", "--config", str(cfgfile),
                   "--alpha", "0.5", "--out", str(out)])
    assert rc == 0
    _, rows = _read_csv(out)
    # the flag wins over the file value
    assert {r[3] for r in rows} == {"0.5"}


def test_config_file_rejects_unknown_key(tmp_path):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("operatr = a1\n")
    with pytest.raises(ArgumentError, match="operatr"):
        cli.main(["convergence", "--config", str(cfgfile)])


def test_config_file_rejects_bad_line(tmp_path):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("just some words\n")
    with pytest.raises(ArgumentError, match="key=value"):
        cli.main(["convergence", "--config", str(cfgfile)])


def test_missing_config_file(tmp_path):
    with pytest.raises(ArgumentError, match="cannot read"):
        cli.main(["convergence", "--config", str(tmp_path / "absent.cfg")])


def test_quad_sweep_self_reference(tmp_path):
    out = tmp_path / "sweep.csv"
    rc = cli.main([
        "quad-sweep", "--operator", "a1", "--source", "f1",
        "--alpha", "0.5", "--mesh", "8", "--tau", "0.075",
        "--out", str(out),
    ])
    assert rc == 0
    header, rows = _read_csv(out)
    assert header == list(ex.QUAD_SWEEP_COLUMNS)
    assert len(rows) == 1
    assert float(rows[0][7]) <= 1e-14


def test_b_sweep_emits_grid(tmp_path):
    out = tmp_path / "bsweep.csv"
    rc = cli.main([
        "b-sweep", "--operator", "a1", "--source", "f1", "--alpha", "0.5",
        "--mesh", "8", "--ref-mesh", "16", "--out", str(out),
    ])
    assert rc == 0
    header, rows = _read_csv(out)
    assert header == list(ex.B_SWEEP_COLUMNS)
    assert len(rows) == 61
    slopes = {r[6] for r in rows}
    assert "-1" in slopes and "" in slopes


def test_allen_cahn_run(tmp_path, capsys):
    out = tmp_path / "ac"
    rc = cli.main([
        "allen-cahn", "--alpha", "1.0", "--mesh", "16",
        "--t-end", "0.03125", "--snapshot-times", "0.0",
        "--out", str(out),
    ])
    assert rc == 0
    assert (out / "snapshot_t0.csv").exists()
    assert (out / "energy.csv").exists()
    said = capsys.readouterr().out
    assert "integrated to t=0.03125" in said
