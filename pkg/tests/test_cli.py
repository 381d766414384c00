import json
import subprocess
import sys

import numpy as np
import pytest

from nematic import cli
from nematic.correlation import read_profile
from nematic.field import read_snapshot

BASE = """
[model]
a = 1
b = 10
c = 1
[grid]
n = 16
box_len = 16
[run]
kind = {kind}
dt = 0.05
t_final = 1
snapshots = 0.5, 1
[initial]
data = {data}
"""


def write_cfg(tmp_path, name="sim.ini", kind="tensor", data="uniaxial_power_tail alpha=0.3 scale=2", extra=""):
    path = tmp_path / name
    path.write_text(BASE.format(kind=kind, data=data) + extra)
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_simulate_outputs(tmp_path):
    cfg = write_cfg(tmp_path)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o", "--test-mode") == 0
    out = tmp_path / "o"
    assert (out / "snap_t0.500000.qtf1").exists() and (out / "snap_t1.000000.qtf1").exists()
    assert (out / "diagnostics.csv").read_text().startswith("t,energy,l2norm,linfnorm\n")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["kind"] == "tensor" and len(manifest["digest"]) == 64
    for name in manifest["outputs"]:
        assert (out / name).exists()


def test_zero_data_gives_zero_snapshots(tmp_path):
    cfg = write_cfg(tmp_path, data="zero")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
    assert np.all(read_snapshot(tmp_path / "o" / "snap_t1.000000.qtf1").values == 0)


def test_scalar_runs_write_qsf1(tmp_path):
    cfg = write_cfg(tmp_path, kind="scalar", data="plateau radius=3")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "snap_t1.000000.qsf1").exists()


def test_transformed_snapshots_are_physical(tmp_path):
    a = write_cfg(tmp_path, "a.ini", kind="tensor")
    b = write_cfg(tmp_path, "b.ini", kind="transformed")
    run("simulate", "--config", a, "--out", tmp_path / "a")
    run("simulate", "--config", b, "--out", tmp_path / "b")
    qa = read_snapshot(tmp_path / "a" / "snap_t1.000000.qtf1")
    qb = read_snapshot(tmp_path / "b" / "snap_t1.000000.qtf1")
    # the two splittings differ at O(dt^2); dt = 0.05 here
    assert np.max(np.abs(qa.values - qb.values)) < 1e-2 * np.max(np.abs(qa.values))


def test_repeat_runs_are_bit_identical(tmp_path):
    cfg = write_cfg(tmp_path)
    for name in ("r1", "r2"):
        assert run("simulate", "--config", cfg, "--out", tmp_path / name, "--test-mode") == 0
    m1 = json.loads((tmp_path / "r1" / "manifest.json").read_text())
    m2 = json.loads((tmp_path / "r2" / "manifest.json").read_text())
    assert m1["digest"] == m2["digest"]
    for name in m1["outputs"]:
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_correlate_and_missing_time(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    run("simulate", "--config", cfg, "--out", tmp_path / "o")
    assert run("correlate", tmp_path / "o", "--time", 1.0, "--out", tmp_path / "c") == 0
    prof = read_profile(tmp_path / "c" / "profile_t1.000000.csv")
    assert prof.c_values[0] == 1.0 and prof.t == 1.0
    assert run("correlate", tmp_path / "o", "--time", 0.7, "--out", tmp_path / "c") == 4
    err = capsys.readouterr().err
    assert "available times: [0.5, 1]" in err
    assert run("correlate", tmp_path / "nowhere", "--out", tmp_path / "c") == 4


def test_one_member_ensemble_equals_correlate(tmp_path):
    extra = "[ensemble]\nmember1 = 1 | uniaxial_power_tail alpha=0.3 scale=2\n"
    cfg = write_cfg(tmp_path, extra=extra)
    assert run("ensemble", "--config", cfg, "--out", tmp_path / "e", "--threads", 2) == 0
    run("simulate", "--config", cfg, "--out", tmp_path / "s")
    run("correlate", tmp_path / "s", "--out", tmp_path / "c")
    for t in ("0.500000", "1.000000"):
        a = (tmp_path / "e" / f"profile_t{t}.csv").read_bytes()
        b = (tmp_path / "c" / f"profile_t{t}.csv").read_bytes()
        assert a == b
    assert (tmp_path / "e" / "gaussian_errors.csv").exists()


def test_ensemble_rejects_bad_weights(tmp_path):
    extra = "[ensemble]\nmember1 = 0.5 | zero\nmember2 = 0.6 | zero\n"
    assert run("ensemble", "--config", write_cfg(tmp_path, extra=extra), "--out", tmp_path / "e") == 2


def test_decompose_writes_directory(tmp_path):
    extra = "[decompose]\ninclude = 1\n"
    cfg = write_cfg(tmp_path, data="uniaxial_power_tail alpha=0.01", extra=extra)
    assert run("decompose", "--config", cfg, "--out", tmp_path / "d") == 0
    meta = json.loads((tmp_path / "d" / "meta.json").read_text())
    assert meta["converged"] and 1.0 in meta["times"]
    assert len(meta["files"]) == len(meta["times"])
    assert set(json.loads((tmp_path / "d" / "A.json").read_text())) == {"q11", "q22", "q12", "q13", "q23"}


def test_decompose_short_horizon_is_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, data="uniaxial_power_tail alpha=0.01", extra="[decompose]\nhorizon = 5\n")
    assert run("decompose", "--config", cfg, "--out", tmp_path / "d") == 2
    assert "horizon" in capsys.readouterr().err


def test_decompose_contraction_failure_is_numeric(tmp_path):
    cfg = write_cfg(tmp_path, data="uniaxial_power_tail alpha=0.01", extra="[decompose]\nmax_iter = 2\n")
    assert run("decompose", "--config", cfg, "--out", tmp_path / "d") == 3


def test_regime_from_series(tmp_path):
    t = np.geomspace(10, 160, 6)
    series = tmp_path / "s.csv"
    series.write_text("t,e\n" + "".join(f"{a},{0.3 * a**-0.5}\n" for a in t))
    assert run("regime", "--series", series, "--out", tmp_path / "r") == 0
    res = json.loads((tmp_path / "r" / "regime.json").read_text())
    assert res["verdict"] == "pass" and res["slope"] == pytest.approx(-0.5)
    assert run("regime", "--series", tmp_path / "missing.csv", "--out", tmp_path / "r") == 4


def test_fronts_command(tmp_path):
    text = BASE.format(kind="scalar", data="plateau radius=3").replace("n = 16", "n = 32").replace("box_len = 16", "box_len = 24")
    text = text.replace("t_final = 1", "t_final = 1.5").replace("snapshots = 0.5, 1", "snapshots = lin:0.15:1.5:10")
    cfg = tmp_path / "f.ini"
    cfg.write_text(text + "[fronts]\nwindow = 0.75; 1.5\n")
    assert run("fronts", "--config", cfg, "--out", tmp_path / "f") == 0
    res = json.loads((tmp_path / "f" / "fronts.json").read_text())
    assert res["c_bar"] > 0 and (tmp_path / "f" / "fronts.csv").exists()


@pytest.mark.parametrize(
    "edit, code, needle",
    [
        (("b = 10", "b = 1"), 2, "region D"),
        (("n = 16", "n = 1.5"), 2, "sim.ini:7: [grid] n"),
        (("dt = 0.05", "dt = 0.5"), 3, "numeric"),
    ],
)
def test_exit_codes(tmp_path, capsys, edit, code, needle):
    data = "gaussian amp=50" if code == 3 else "uniaxial_power_tail alpha=0.3"
    cfg = tmp_path / "sim.ini"
    cfg.write_text(BASE.format(kind="tensor", data=data).replace(*edit))
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == code
    assert needle in capsys.readouterr().err


def test_missing_config_and_bad_threads(tmp_path):
    assert run("simulate", "--config", tmp_path / "nope.ini") == 4
    assert run("simulate", "--config", write_cfg(tmp_path), "--threads", 0) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "nematic", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
