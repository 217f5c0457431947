import csv
import re
import subprocess
import sys

import pytest

from tpemimo.cli import main

SPEC = """
[experiment]
precoders = conjbf, tpe2-finite, mmse
snr_db = 10
trials = 2

[system]
M = 32
K = 4

[clusters]
a = -20 30
b = 25 20

[association]
a = * * . *
b = . * * *
"""


def write_spec(tmp_path, extra=""):
    p = tmp_path / "e.ini"
    p.write_text(SPEC.replace("trials = 2", "trials = 2\n" + extra))
    return p


def test_run(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["run", "--spec", str(write_spec(tmp_path)), "--out", str(out), "--seed", "9"]) == 0
    text = capsys.readouterr().out
    assert "sum rate" in text and "mmse" in text
    assert (out / "results.csv").exists() and (out / "results.json").exists()


def test_run_failed_cells_exit_nonzero(tmp_path, capsys):
    spec = write_spec(tmp_path, "power = minpower:1e9")
    assert main(["run", "--spec", str(spec), "--out", str(tmp_path / "r"), "--format", "csv"]) == 1
    assert "FAILED" in capsys.readouterr().err


def test_run_bad_inputs(tmp_path, capsys):
    assert main(["run", "--spec", str(tmp_path / "missing.ini")]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run"])
    with pytest.raises(SystemExit):
        main(["run", "--scenario", "nowhere"])


def test_latency(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert main(["latency", "--out", str(out), "--config", "160,16,4"]) == 0
    text = capsys.readouterr().out
    assert re.search(r"L_tpe\s+128 cycles", text) and "alpha 5.8125" in text
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["dsp_blocks", "M", "K", "J", "L_tpe", "L_rzf", "alpha"]
    assert len(rows) == 1 + 4
    assert main(["latency", "--U", "3"]) == 2


def test_moments_and_weights(tmp_path, capsys):
    m, w = tmp_path / "m.csv", tmp_path / "w.csv"
    args = ["moments", "--spec", str(write_spec(tmp_path)), "--order", "5", "--out", str(m),
            "--weights", "2", "--weights-out", str(w), "--power", "conventional"]
    assert main(args) == 0
    rows = list(csv.reader(m.open()))
    assert len(rows) == 1 + 4 * 6
    wrows = list(csv.reader(w.open()))
    assert len(wrows) == 1 + 4
    with pytest.raises(SystemExit):
        main(["moments", "--scenario", "single-cluster", "--order", "3", "--weights", "2", "--out", str(m)])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "tpemimo", "latency", "--M", "40", "--K", "8", "--J", "2", "--U", "2"],
                       capture_output=True, text=True, check=True)
    assert "alpha" in r.stdout
