import numpy as np
import pytest

from lightcom import fileio
from lightcom.cli import (
    UsageError, cli_dispatch, parse_block, parse_level, parse_level_list,
)

from conftest import random_image


@pytest.fixture
def img_path(tmp_path):
    p = tmp_path / "in.pgm"
    fileio.write_image(random_image(2, 16, 16), p)
    return p


def run(*argv):
    return cli_dispatch(list(argv))


# -------------------------------------------------------------- arg parsing

def test_parse_level_db_unless_lin_suffixed():
    assert parse_level("10") == pytest.approx(10.0 ** 1.0)
    assert parse_level("0") == pytest.approx(1.0)
    assert parse_level("-3") == pytest.approx(10 ** -0.3)
    assert parse_level("10lin") == 10.0
    assert parse_level(" 2.5lin ") == 2.5
    with pytest.raises(UsageError):
        parse_level("tenlin")
    assert parse_level_list("0,3lin,0lin") == pytest.approx([1.0, 3.0, 0.0], abs=0)


def test_parse_block():
    assert parse_block("4x2") == (4, 2)
    assert parse_block("1X1") == (1, 1)
    for bad in ("4", "4x2x1", "0x2", "axb"):
        with pytest.raises(UsageError):
            parse_block(bad)


# -------------------------------------------------------------- exit codes

def test_exit_codes(tmp_path, capsys):
    assert run("--help") == 0
    capsys.readouterr()
    assert run("encode", "--input", "x.pgm") == 1          # --out missing
    assert run("nonsense") == 1
    assert run("encode", "--input", str(tmp_path / "nope.pgm"),
               "--out", str(tmp_path / "o.lcr"), "--rate", "1.0") == 2
    err = capsys.readouterr().err
    assert "error" in err or "Error" in err


def test_encode_rejects_rate_and_block_together(img_path, tmp_path, capsys):
    out = str(tmp_path / "o.lcr")
    assert run("encode", "--input", str(img_path), "--out", out,
               "--rate", "0.25", "--block", "2x2") == 1
    assert run("encode", "--input", str(img_path), "--out", out) == 1
    assert run("encode", "--input", str(img_path), "--out", out,
               "--rate", "0.3") == 1
    assert "error" in capsys.readouterr().err


# ------------------------------------------------------------- happy paths

def test_encode_then_reconstruct(img_path, tmp_path, capsys):
    lcr = tmp_path / "o.lcr"
    out = tmp_path / "r.pgm"
    assert run("encode", "--input", str(img_path), "--out", str(lcr),
               "--block", "4x2") == 0
    assert "8x4x1x2" not in capsys.readouterr().out   # sanity on capture only
    assert lcr.is_file()
    assert run("reconstruct", "--input", str(lcr), "--out", str(out),
               "--kind", "nearest") == 0
    img = fileio.read_image(out)
    assert (img.width, img.height) == (16, 16)
    # nearest replication: constant within each 4x2 block
    s = img.samples[:, :, 0]
    assert np.all(s[0::2, :] == s[1::2, :])
    for c in range(4):
        block = s[:, 4 * c:4 * c + 4]
        assert np.all(block == block[:, :1])


def test_allocate_output(capsys):
    code = run("allocate", "--k", "2", "--gains", "0,0", "--weights", "1,4",
               "--power", str(3.0) + "lin", "--mode", "coded",
               "--alpha", "0.5", "--beta", "-1.0")
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("powers: ")
    p1, p2 = (float(v) for v in lines[0].split(" ", 1)[1].split(","))
    want = np.log(4.0)
    assert p1 == pytest.approx((3 - want) / 2, abs=1e-9)
    assert p2 == pytest.approx((3 + want) / 2, abs=1e-9)
    assert lines[1].startswith("H_level: ")
    assert lines[2].startswith("ber_pred: ")
    assert lines[3].startswith("imse_pred: ")


def test_allocate_validates_shape_and_mode(capsys):
    assert run("allocate", "--k", "3", "--gains", "0,0", "--weights", "1,4",
               "--power", "0", "--mode", "uncoded") == 1
    assert run("allocate", "--k", "2", "--gains", "0,0", "--weights", "1,4",
               "--power", "0", "--mode", "coded") == 1    # alpha/beta missing
    capsys.readouterr()


def test_simulate_from_config(img_path, tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text(f"""
[source]
image = "{img_path.name}"
block = [2, 2]

[power]
total_db = 10.0
allocator = "ep"

[run]
n_trials = 2
base_seed = 4
workers = 1
""")
    out = tmp_path / "res"
    assert run("simulate", "--config", str(cfg), "--out", str(out)) == 0
    text = capsys.readouterr().out
    assert "trials: 2" in text
    assert (out / "manifest.json").is_file()
    assert (out / "trials.csv").read_text().count("\n") == 3


def test_fit_ber_roundtrip(tmp_path, capsys):
    snr = np.linspace(1.0, 8.0, 12)
    ber = 0.42 * np.exp(-1.17 * snr)
    src = tmp_path / "meas.csv"
    src.write_text("snr_linear,ber\n"
                   + "\n".join(f"{s},{b}" for s, b in zip(snr, ber)) + "\n")
    out = tmp_path / "model.csv"
    assert run("fit-ber", "--input", str(src), "--out", str(out)) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert float(lines[0].split(": ")[1]) == pytest.approx(0.42, rel=1e-6)
    assert float(lines[1].split(": ")[1]) == pytest.approx(-1.17, rel=1e-6)
    assert out.is_file()


def test_embed_distance_builtin(img_path, tmp_path, capsys):
    other = tmp_path / "b.pgm"
    fileio.write_image(random_image(9, 16, 16), other)
    assert run("embed-distance", "--a", str(img_path), "--b", str(img_path)) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.0, abs=1e-12)
    assert run("embed-distance", "--a", str(img_path), "--b", str(other)) == 0
    d = float(capsys.readouterr().out)
    assert 0.0 <= d <= 2.0
    assert run("embed-distance", "--a", str(img_path), "--b", str(other),
               "--provider", "remote") == 1    # endpoint required
    capsys.readouterr()


def test_sweep_coverage_cli(img_path, tmp_path, capsys):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(f"""
[source]
image = "{img_path.name}"

[run]
n_trials = 1
workers = 1

[sweep]
snr_db = [-20.0, 30.0]
rates = [1.0, 0.25]
criterion = "imse_pred"
imse_threshold = 1.0
""")
    out = tmp_path / "cov"
    assert run("sweep-coverage", "--config", str(cfg), "--out", str(out)) == 0
    text = capsys.readouterr().out
    assert "criterion: imse_pred" in text
    assert (out / "coverage.csv").is_file()
    assert (out / "coverage_matrix.dat").is_file()
