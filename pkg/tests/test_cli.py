import subprocess
import sys

import numpy as np
import pytest

from wbfm.cli import main
from wbfm.config import load_config
from wbfm.io import read_csv, read_signal, read_signal_csv

SMALL = """\
L = 1024
a = 16
b = 8
window_width = 32
spectrum_lo = 50
spectrum_hi = 200
spectrum_partials = 8
mod_k0 = 100
mod_amplitude = 10
max_iter = 6
num_realizations = 3
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_synth_constant_noiseless_roundtrip(tmp_path, cfg_path):
    extra = tmp_path / "c.cfg"
    extra.write_text(SMALL.replace("mod_amplitude = 10\n", "modulation = constant\nsigma0 = 0\n"))
    out = tmp_path / "s"
    assert main(["synth", "--config", str(extra), "--out", str(out)]) == 0
    Y = read_signal(out / "signal.wbfm")
    Z = read_signal(out / "stationary.wbfm")
    truth = read_csv(out / "gamma_true.csv", ["t", "gamma", "gamma_prime"])
    np.testing.assert_allclose(Y, Z * np.exp(2j * np.pi * truth["gamma"] / 1024), atol=1e-12)
    assert np.all(truth["gamma_prime"] == 100)
    assert int.from_bytes((out / "signal.wbfm").read_bytes()[4:8], "little") == 1024
    spec = read_csv(out / "spectrum_true.csv", ["bin", "S"])
    assert spec["S"].size == 513 and spec["S"].sum() == pytest.approx(1.0, rel=1e-8)
    echo = load_config(out / "config.txt")
    assert echo.modulation == "constant" and echo.sigma0 == 0


def test_synth_is_byte_identical_and_seed_sensitive(tmp_path, cfg_path):
    for name, seed in (("a", "5"), ("b", "5"), ("c", "6")):
        assert main(["synth", "--config", str(cfg_path), "--out", str(tmp_path / name),
                     "--seed", seed]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    assert (tmp_path / "a/signal.wbfm").read_bytes() != (tmp_path / "c/signal.wbfm").read_bytes()
    assert "seed = 5\n" in (tmp_path / "a/config.txt").read_text()


def test_csv_signal_format_and_estimate(tmp_path, cfg_path):
    p = tmp_path / "csv.cfg"
    p.write_text(SMALL + "signal_format = csv\n")
    assert main(["synth", "--config", str(p), "--out", str(tmp_path / "s")]) == 0
    sig = tmp_path / "s/signal.csv"
    assert sig.read_bytes().startswith(b"t,re,im\n0,")
    assert read_signal_csv(sig).size == 1024
    out = tmp_path / "e"
    rc = main(["estimate", "--config", str(p), "--out", str(out), "--input", str(sig),
               "--truth", str(tmp_path / "s/gamma_true.csv"),
               "--truth-spectrum", str(tmp_path / "s/spectrum_true.csv")])
    assert rc == 0
    for name in ("iterations.csv", "track.csv", "spectrum.csv", "spectrogram.csv",
                 "metrics.csv", "overlay.png", "config.txt"):
        assert (out / name).exists(), name
    m = read_csv(out / "metrics.csv")
    assert m["rmse_corrected"][0] < 1.5
    trk = read_csv(out / "track.csv",
                   ["frame", "time_sample", "delta_coarse", "offset_c", "gamma_prime_hat"])
    np.testing.assert_array_equal(trk["time_sample"], 16 * trk["frame"])
    np.testing.assert_array_equal(trk["gamma_prime_hat"], 8 * trk["delta_coarse"] + trk["offset_c"])
    lines = (out / "spectrogram.csv").read_text().splitlines()
    assert len(lines) == 1 + 128 and len(lines[0].split(",")) == 1 + 64


def test_run_matches_synth_then_estimate(tmp_path, cfg_path):
    base = ["--config", str(cfg_path), "--no-plots"]
    assert main(["run", *base, "--out", str(tmp_path / "r")]) == 0
    assert main(["synth", *base, "--out", str(tmp_path / "s")]) == 0
    assert main(["estimate", *base, "--out", str(tmp_path / "e"),
                 "--input", str(tmp_path / "s/signal.wbfm"),
                 "--truth", str(tmp_path / "s/gamma_true.csv")]) == 0
    for name in ("iterations.csv", "track.csv", "spectrum.csv", "spectrogram.csv"):
        assert (tmp_path / "r" / name).read_bytes() == (tmp_path / "e" / name).read_bytes()


def test_missing_input_leaves_no_outputs(tmp_path, cfg_path, capsys):
    out = tmp_path / "e"
    rc = main(["estimate", "--config", str(cfg_path), "--out", str(out),
               "--input", str(tmp_path / "nope.wbfm")])
    assert rc == 3
    assert not out.exists()
    assert "I/O error" in capsys.readouterr().err
    # an existing output directory is left untouched as well
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["estimate", "--config", str(cfg_path), "--out", str(out),
                 "--input", str(tmp_path / "nope.wbfm")]) == 3
    assert [p.name for p in out.iterdir()] == ["keep.txt"]
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".wbfm-")]


def test_corrupt_input_is_an_io_error(tmp_path, cfg_path, capsys):
    bad = tmp_path / "bad.wbfm"
    bad.write_bytes(b"NOPE" + bytes(12))
    assert main(["estimate", "--config", str(cfg_path), "--out", str(tmp_path / "e"),
                 "--input", str(bad)]) == 3
    assert "magic" in capsys.readouterr().err


def test_length_mismatch_is_a_config_error(tmp_path, cfg_path):
    assert main(["synth", "--config", str(cfg_path), "--out", str(tmp_path / "s")]) == 0
    other = tmp_path / "o.cfg"
    other.write_text(SMALL.replace("L = 1024", "L = 2048"))
    assert main(["estimate", "--config", str(other), "--out", str(tmp_path / "e"),
                 "--input", str(tmp_path / "s/signal.wbfm")]) == 1


@pytest.mark.parametrize("argv", [
    ["run"],                                   # --out missing
    ["frobnicate", "--out", "x"],
    ["run", "--out", "x", "--bogus"],
    ["run", "--out", "x", "--seed", "-1"],
    ["run", "--out", "x", "--workers", "0"],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_config_errors_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("L = 1024\nwindw = gauss\n")
    assert main(["synth", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "unknown key 'windw'" in capsys.readouterr().err
    p.write_text("a = 33\n")
    assert main(["synth", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "a: 33 does not divide" in capsys.readouterr().err
    assert main(["synth", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "o")]) == 3


def test_montecarlo_rejects_single_realization(tmp_path, cfg_path):
    p = tmp_path / "one.cfg"
    p.write_text(SMALL.replace("num_realizations = 3", "num_realizations = 1"))
    assert main(["montecarlo", "--config", str(p), "--out", str(tmp_path / "m")]) == 1
    assert not (tmp_path / "m").exists()


def test_numerical_failure_exit_2(tmp_path):
    # 16 frames cannot support a 256-dimensional empirical covariance without a ridge
    p = tmp_path / "sing.cfg"
    p.write_text(SMALL.replace("a = 16", "a = 64").replace("b = 8", "b = 4")
                 + "covariance = empirical\nlambda_rel = 0\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "r"), "--no-plots"]) == 2
    assert not (tmp_path / "r").exists()


def test_montecarlo_outputs_and_worker_independence(tmp_path, cfg_path):
    outs = []
    for workers in ("1", "2"):
        out = tmp_path / f"m{workers}"
        assert main(["montecarlo", "--config", str(cfg_path), "--out", str(out),
                     "--workers", workers, "--no-plots"]) == 0
        outs.append(out)
    a, b = _files(outs[0]), _files(outs[1])
    assert a == b
    assert {"convergence.csv", "runs.csv", "summary.csv", "spectrum_mean.csv", "config.txt",
            "run_000/track.csv", "run_002/metrics.csv"} <= set(a)
    conv = read_csv(outs[0] / "convergence.csv", ["iter", "mean_criterion", "std_criterion"])
    assert conv["iter"][0] == 1 and np.all(conv["mean_criterion"] >= 0)
    runs = (outs[0] / "runs.csv").read_text().splitlines()
    assert len(runs) == 4 and runs[1].startswith("0,0,ok,")


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "wbfm.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "montecarlo" in r.stdout
