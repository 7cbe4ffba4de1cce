import hashlib
import json
import math

import numpy as np
import pytest

from lightcom import fileio, phy, qoe, runner
from lightcom.allocation import CodedMode, UncodedMode
from lightcom.config import RunConfig, SweepConfig
from lightcom.errors import ConfigError
from lightcom.source_codec import plane_weights

from conftest import random_image


@pytest.fixture
def run_cfg(tmp_path):
    img = random_image(5, 16, 16)
    path = tmp_path / "in.pgm"
    fileio.write_image(img, path)
    return RunConfig(image=str(path), block=(2, 2), codec="uncoded",
                     modulation=4, noise_var=1.0, power_db=9.0,
                     allocator="wf", n_trials=3, base_seed=11, workers=1,
                     out_dir=str(tmp_path / "out"))


# ----------------------------------------------------------- power resolve

def test_resolve_total_power_db_path():
    cfg = RunConfig(image="x", power_db=13.0)
    assert runner.resolve_total_power(cfg, 8, 1.0) == pytest.approx(10 ** 1.3)


def test_resolve_total_power_ebno_path():
    # P = K sigma2 snr with snr = (Eb/N0) log2(M) Rc
    cfg = RunConfig(image="x", ebno_db=6.0, modulation=16, noise_var=0.5)
    ebno = 10 ** 0.6
    want = 8 * 0.5 * (ebno * 4 * 0.5)
    assert runner.resolve_total_power(cfg, 8, 0.5) == pytest.approx(want, rel=1e-12)


def test_resolve_total_power_requires_exactly_one():
    with pytest.raises(ConfigError):
        runner.resolve_total_power(RunConfig(image="x"), 8, 1.0)
    with pytest.raises(ConfigError):
        runner.resolve_total_power(
            RunConfig(image="x", power_db=1.0, ebno_db=1.0), 8, 1.0)


# ----------------------------------------------------------- problem build

def test_build_problem_weights_and_gains():
    cfg = RunConfig(image="x", gains_db=[0.0, -3.0, -6.0], power_db=10.0)
    prob = runner.build_problem(cfg, 3, 10.0)
    assert np.array_equal(prob.weights, plane_weights(3))
    assert prob.gains_sq == pytest.approx([1.0, 10 ** -0.3, 10 ** -0.6])
    assert isinstance(prob.mode, UncodedMode)


def test_build_problem_gain_count_mismatch():
    cfg = RunConfig(image="x", gains_db=[0.0, 0.0])
    with pytest.raises(ConfigError, match="expected 8 entries"):
        runner.build_problem(cfg, 8, 1.0)


def test_build_problem_wf_coded_needs_fit():
    cfg = RunConfig(image="x", codec="hamming74", allocator="wf")
    with pytest.raises(ConfigError, match="fit-ber"):
        runner.build_problem(cfg, 8, 1.0)
    cfg.coded_alpha, cfg.coded_beta = 0.4, -1.1
    prob = runner.build_problem(cfg, 8, 1.0)
    assert isinstance(prob.mode, CodedMode)
    # ep over a coded chain is fine without a fit
    cfg2 = RunConfig(image="x", codec="hamming74", allocator="ep")
    assert isinstance(runner.build_problem(cfg2, 8, 1.0).mode, UncodedMode)


# ------------------------------------------------------------------ trials

def test_trial_seeds_deterministic_and_distinct():
    seeds = [runner._trial_seed(9, t) for t in range(50)]
    assert seeds == [runner._trial_seed(9, t) for t in range(50)]
    assert len(set(seeds)) == 50
    assert runner._trial_seed(10, 0) != seeds[0]


def test_run_trials_deterministic(run_cfg):
    ctx, _, _ = runner.build_context(run_cfg)
    rec1, img1 = runner.run_trials(ctx, 3, workers=1)
    rec2, img2 = runner.run_trials(ctx, 3, workers=1)
    assert [r.ber for r in rec1] == [r.ber for r in rec2]
    assert [r.imse_emp for r in rec1] == [r.imse_emp for r in rec2]
    assert np.array_equal(img1.samples, img2.samples)


def test_run_trials_worker_count_invariant(run_cfg):
    ctx, _, _ = runner.build_context(run_cfg)
    serial, _ = runner.run_trials(ctx, 4, workers=1)
    pooled, _ = runner.run_trials(ctx, 4, workers=2)
    assert [r.trial for r in pooled] == [0, 1, 2, 3]   # order preserved
    for a, b in zip(serial, pooled):
        assert a.seed == b.seed
        assert a.ber == b.ber
        assert a.imse_emp == b.imse_emp


def test_trials_csv_layout(run_cfg):
    ctx, _, _ = runner.build_context(run_cfg)
    records, _ = runner.run_trials(ctx, 2, workers=1)
    text = runner.trials_csv(records, 8)
    lines = text.strip().split("\n")
    head = lines[0].split(",")
    assert head[0] == "seed"
    assert head[1] == "snr_db_1" and head[8] == "snr_db_8"
    assert head[9] == "ber_1" and head[16] == "ber_8"
    assert head[17:] == ["imse", "d_niqe", "d_clip", "pass"]
    row = lines[1].split(",")
    assert len(row) == len(head)
    assert int(row[0]) == records[0].seed
    assert math.isnan(float(row[18]))      # no QoE stack configured
    assert row[20] == ""                   # pass column empty, not 0


def test_qoe_fields_populated_when_model_present(run_cfg, monkeypatch):
    calls = []

    def fake_evaluate(original, reconstructed, model, provider):
        calls.append((original.width, reconstructed.width))
        return qoe.QoEScore(d_niqe=1.5, d_clip=0.05)

    monkeypatch.setattr(runner.qoe, "qoe_evaluate", fake_evaluate)
    ctx, _, _ = runner.build_context(run_cfg)
    ctx.model = object()
    ctx.provider = object()
    ctx.thresholds = qoe.QoEThresholds(d_niqe=2.0, d_clip=0.1)
    rec, _ = runner.run_chain_trial(ctx, 0)
    assert calls == [(16, 16)]
    assert rec.d_niqe == 1.5 and rec.d_clip == 0.05
    assert rec.passed is True


# ------------------------------------------------------------ end to end

def test_run_end_to_end_artifacts(run_cfg, tmp_path):
    records = runner.run_end_to_end(run_cfg)
    assert len(records) == 3
    out = tmp_path / "out"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["allocation.csv", "config.toml", "manifest.json",
                     "recon_000.pgm", "summary.txt", "trials.csv"]

    manifest = json.loads((out / "manifest.json").read_text())
    for name, digest in manifest["artifacts"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert "manifest.json" not in manifest["artifacts"]
    cfg_sha = hashlib.sha256((out / "config.toml").read_bytes()).hexdigest()
    assert manifest["config_sha256"] == cfg_sha

    summary = (out / "summary.txt").read_text()
    assert "trials: 3" in summary
    assert "powers:" in summary and "predicted imse:" in summary
    assert "allocator: wf" in summary


def test_restore_endpoint_env_override(run_cfg, monkeypatch):
    run_cfg.reconstructor = "remote"
    run_cfg.remote_endpoint = "http://config-host:1"
    rec = runner._build_reconstructor(run_cfg)
    assert rec.endpoint == "http://config-host:1"
    monkeypatch.setenv(runner.RESTORE_ENDPOINT_ENV, "http://env-host:2")
    rec = runner._build_reconstructor(run_cfg)
    assert rec.endpoint == "http://env-host:2"


# ------------------------------------------------------------------ sweeps

def test_run_sweep_qoe_needs_model(run_cfg):
    sweep = SweepConfig(base=run_cfg, snr_db=[0.0], rates=[1.0], criterion="qoe")
    with pytest.raises(ConfigError, match="pristine_model"):
        runner.run_sweep(sweep)


def test_run_sweep_imse_pred(run_cfg, tmp_path):
    run_cfg.power_db = None    # sweep supplies per-cell power from grid snr
    sweep = SweepConfig(base=run_cfg, snr_db=[-20.0, 30.0], rates=[1.0, 0.25],
                        criterion="imse_pred", imse_threshold=1.0)
    cov = runner.run_sweep(sweep)
    assert not cov.cell(-20.0, 1.0).passed
    assert cov.cell(30.0, 1.0).passed
    out = tmp_path / "out"
    assert (out / "coverage.csv").is_file()
    assert (out / "coverage.gp").is_file()
    matrix = (out / "coverage_matrix.dat").read_text().splitlines()
    assert matrix[0].split() == ["2", "-20", "30"]
    # matrix carries the predicted imse surface under this criterion
    vals = [float(v) for v in matrix[1].split()[1:]]
    assert vals[0] > 1.0 and vals[1] < 1.0
    assert "imse_pred <= 1" in (out / "summary.txt").read_text()
