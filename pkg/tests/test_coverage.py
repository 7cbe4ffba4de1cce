import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lightcom.coverage import (
    CoverageMap, coverage_gain, coverage_summary, sweep_coverage,
    write_coverage_csv, write_gnuplot_matrix,
)
from lightcom.errors import InvalidMode, LightcomError, NonPositiveInput
from lightcom.qoe import QoEThresholds

SNRS = [0.0, 2.0, 4.0, 6.0]
RATES = [1.0, 0.25, 0.0625]


def rectangle_evaluator(snr_db, rate, seed):
    # passes exactly when snr >= 4 and rate >= 0.25
    good = snr_db >= 4.0 and rate >= 0.25
    return (1.0, 0.01) if good else (10.0, 0.5)


def test_rectangular_pass_region():
    cov = sweep_coverage(SNRS, RATES, 3, rectangle_evaluator,
                         thresholds=QoEThresholds(5.0, 0.1))
    assert cov.cell(4.0, 0.25).passed
    assert not cov.cell(2.0, 0.25).passed
    assert not cov.cell(4.0, 0.0625).passed
    assert cov.frontier == {0.0: None, 2.0: None, 4.0: 0.25, 6.0: 0.25}
    assert cov.limit_snr == (4.0, 0.25)
    assert cov.limit_rate == (4.0, 0.25)
    assert all(c.n_trials == 3 for c in cov.cells)


def test_cells_are_snr_major():
    cov = sweep_coverage(SNRS, RATES, 1, rectangle_evaluator)
    keys = [(c.snr_db, c.rate) for c in cov.cells]
    assert keys[:3] == [(0.0, 1.0), (0.0, 0.25), (0.0, 0.0625)]
    assert keys[3][0] == 2.0


def test_rate_limited_point_prefers_lowest_snr():
    def evaluate(snr_db, rate, seed):
        # minimum workable rate shrinks as snr grows
        ok = (snr_db >= 2.0 and rate >= 0.25) or (snr_db >= 6.0)
        return (1.0, 0.01) if ok else (10.0, 0.5)

    cov = sweep_coverage(SNRS, RATES, 1, evaluate)
    assert cov.limit_snr == (2.0, 0.25)
    assert cov.limit_rate == (6.0, 0.0625)


def test_failing_cell_error_is_recorded_not_raised():
    class Boom(LightcomError):
        pass

    def evaluate(snr_db, rate, seed):
        if snr_db == 2.0 and rate == 0.25:
            raise Boom("allocator diverged")
        return 1.0, 0.01

    cov = sweep_coverage(SNRS, RATES, 2, evaluate)
    bad = cov.cell(2.0, 0.25)
    assert not bad.valid
    assert not bad.passed
    assert "allocator diverged" in bad.error
    assert cov.cell(2.0, 1.0).passed   # neighbours unaffected


def test_trial_seeds_unique_and_deterministic():
    seen = {}

    def evaluate(snr_db, rate, seed):
        seen.setdefault((snr_db, rate), []).append(seed)
        return 1.0, 0.01

    sweep_coverage([0.0, 1.0], [1.0], 4, evaluate, base_seed=77)
    all_seeds = [s for v in seen.values() for s in v]
    assert len(set(all_seeds)) == len(all_seeds)
    first = dict(seen)
    seen.clear()
    sweep_coverage([0.0, 1.0], [1.0], 4, evaluate, base_seed=77)
    assert seen == first


def test_imse_pred_criterion():
    def predict(snr_db, rate):
        return 100.0 / (1.0 + snr_db)

    def evaluate(snr_db, rate, seed):
        return float("nan"), float("nan")   # diagnostics unavailable

    cov = sweep_coverage(SNRS, RATES, 1, evaluate, criterion="imse_pred",
                         imse_threshold=30.0, predict_imse=predict)
    assert not cov.cell(0.0, 1.0).passed
    assert cov.cell(4.0, 1.0).passed
    assert cov.imse_threshold == 30.0
    assert "imse_pred <= 30" in coverage_summary(cov)


def test_sweep_validation():
    with pytest.raises(ValueError):
        sweep_coverage([], RATES, 1, rectangle_evaluator)
    with pytest.raises(ValueError):
        sweep_coverage(SNRS, [0.0, 1.0], 1, rectangle_evaluator)
    with pytest.raises(ValueError):
        sweep_coverage(SNRS, [1.5], 1, rectangle_evaluator)
    with pytest.raises(ValueError):
        sweep_coverage(SNRS, RATES, 0, rectangle_evaluator)
    with pytest.raises(InvalidMode):
        sweep_coverage(SNRS, RATES, 1, rectangle_evaluator, criterion="psnr")
    with pytest.raises(InvalidMode):
        sweep_coverage(SNRS, RATES, 1, rectangle_evaluator,
                       criterion="imse_pred")   # threshold missing


# ------------------------------------------------------------ gain

def test_coverage_gain_pinned_decomposition():
    # snr drops 10.5 -> 6 dB while rate drops 1 -> 0.42
    g, g_power, g_bw = coverage_gain(6.0, 10.5, 0.42, 1.0)
    assert g_power == pytest.approx(4.5)
    assert g_bw == pytest.approx(10 * np.log10(0.42), abs=1e-12)
    assert g == g_power + g_bw   # identity holds exactly
    assert g == pytest.approx(0.7318 - 0.0018, abs=0.01)


def test_coverage_gain_errors():
    with pytest.raises(NonPositiveInput):
        coverage_gain(0.0, 1.0, 0.0, 1.0)
    with pytest.raises(NonPositiveInput):
        coverage_gain(0.0, 1.0, 0.5, -1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20),
       st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_coverage_gain_antisymmetric(s1, s2, r1, r2):
    g_fwd, _, _ = coverage_gain(s1, s2, r1, r2)
    g_rev, _, _ = coverage_gain(s2, s1, r2, r1)
    assert g_fwd == pytest.approx(-g_rev, abs=1e-9)


# ------------------------------------------------------------ output

def test_coverage_csv_layout(tmp_path):
    cov = sweep_coverage([0.0, 4.0], [1.0, 0.25], 2, rectangle_evaluator)
    p = tmp_path / "c.csv"
    write_coverage_csv(cov, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "snr_db,rate,d_niqe_mean,d_clip_mean,pass,n_trials"
    assert len(lines) == 5
    assert lines[3] == "4,1,1,0.01,1,2"


def test_gnuplot_matrix_layout(tmp_path):
    cov = sweep_coverage([0.0, 4.0], [1.0, 0.25], 1, rectangle_evaluator)
    p = tmp_path / "m.dat"
    write_gnuplot_matrix(cov, p, quantity="pass")
    lines = p.read_text().splitlines()
    assert lines[0].split() == ["2", "0", "4"]
    assert lines[1].split() == ["1", "0", "1"]
    assert lines[2].split() == ["0.25", "0", "1"]


def test_summary_mentions_region_and_errors():
    cov = sweep_coverage(SNRS, RATES, 1, rectangle_evaluator)
    text = coverage_summary(cov)
    assert "snr-limited point: snr_db=4 rate=0.25" in text
    assert "4 -> 0.25" in text

    def broken(snr_db, rate, seed):
        raise LightcomError("nope")

    text = coverage_summary(sweep_coverage([1.0], [1.0], 1, broken))
    assert "no passing cells" in text
    assert "invalid cell" in text and "nope" in text
