"""Perceived coverage over (snr, rate) grids, frontier and gain analysis.

A cell passes when the mean QoE over its trials meets both thresholds
("qoe" criterion) or when its predicted IMSE meets a distortion bound
("imse_pred" criterion). The frontier maps each snr column to the
smallest passing rate. Two limit points summarize the admissible region:
the snr-limited point (lowest workable snr, at its frontier rate) and the
rate-limited point (lowest workable rate, at the lowest snr achieving it).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidMode, LightcomError, NonPositiveInput
from .qoe import QoEThresholds

TrialEvaluator = Callable[[float, float, int], tuple[float, float]]
ImsePredictor = Callable[[float, float], float]


@dataclass
class CoverageCell:
    snr_db: float
    rate: float
    d_niqe_mean: float
    d_clip_mean: float
    imse_pred: float
    passed: bool
    valid: bool
    n_trials: int
    error: str | None = None


@dataclass
class CoverageMap:
    snr_db_grid: np.ndarray
    rate_grid: np.ndarray
    cells: list[CoverageCell] = field(repr=False)   # snr-major order
    frontier: dict[float, float | None]
    limit_snr: tuple[float, float] | None    # (snr at lowest workable snr, its rate)
    limit_rate: tuple[float, float] | None   # (snr achieving the lowest rate, that rate)
    criterion: str
    thresholds: QoEThresholds
    n_trials: int
    imse_threshold: float | None = None

    def cell(self, snr_db: float, rate: float) -> CoverageCell:
        for c in self.cells:
            if c.snr_db == snr_db and c.rate == rate:
                return c
        raise KeyError((snr_db, rate))


def _cell_seed(base_seed: int, cell_index: int, trial: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(cell_index, trial))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sweep_coverage(snr_db_grid, rate_grid, n_trials: int,
                   evaluate: TrialEvaluator,
                   thresholds: QoEThresholds | None = None,
                   criterion: str = "qoe",
                   imse_threshold: float | None = None,
                   predict_imse: ImsePredictor | None = None,
                   base_seed: int = 0) -> CoverageMap:
    """Evaluate every (snr, rate) cell with n_trials seeded trials.

    evaluate(snr_db, rate, seed) returns one trial's (d_niqe, d_clip).
    Component failures (LightcomError) mark the cell invalid and failing
    rather than aborting the sweep. Deterministic for fixed base_seed.
    """
    snr_db_grid = np.asarray(snr_db_grid, dtype=np.float64)
    rate_grid = np.asarray(rate_grid, dtype=np.float64)
    if snr_db_grid.size == 0 or rate_grid.size == 0:
        raise ValueError("snr and rate grids must be nonempty")
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if np.any(rate_grid <= 0) or np.any(rate_grid > 1):
        raise ValueError("rates must lie in (0, 1]")
    thresholds = thresholds or QoEThresholds()
    if criterion not in ("qoe", "imse_pred"):
        raise InvalidMode(f"unknown pass criterion {criterion!r}")
    if criterion == "imse_pred" and (imse_threshold is None or predict_imse is None):
        raise InvalidMode("imse_pred criterion needs imse_threshold and predict_imse")

    cells: list[CoverageCell] = []
    cell_index = 0
    for snr_db in snr_db_grid:
        for rate in rate_grid:
            niqe_sum = clip_sum = 0.0
            err: str | None = None
            done = 0
            for t in range(n_trials):
                seed = _cell_seed(base_seed, cell_index, t)
                try:
                    d_niqe, d_clip = evaluate(float(snr_db), float(rate), seed)
                except LightcomError as exc:
                    err = f"{type(exc).__name__}: {exc}"
                    break
                niqe_sum += d_niqe
                clip_sum += d_clip
                done += 1
            imse_pred = float("nan")
            if predict_imse is not None and err is None:
                try:
                    imse_pred = float(predict_imse(float(snr_db), float(rate)))
                except LightcomError as exc:
                    err = f"{type(exc).__name__}: {exc}"
            valid = err is None
            if valid:
                niqe_mean, clip_mean = niqe_sum / n_trials, clip_sum / n_trials
                if criterion == "qoe":
                    passed = (niqe_mean <= thresholds.d_niqe
                              and clip_mean <= thresholds.d_clip)
                else:
                    passed = imse_pred <= imse_threshold
            else:
                niqe_mean = clip_mean = float("nan")
                passed = False   # invalid cells never pass silently
            cells.append(CoverageCell(snr_db=float(snr_db), rate=float(rate),
                                      d_niqe_mean=niqe_mean, d_clip_mean=clip_mean,
                                      imse_pred=imse_pred, passed=passed,
                                      valid=valid, n_trials=done, error=err))
            cell_index += 1

    frontier: dict[float, float | None] = {}
    for snr_db in snr_db_grid:
        passing = [c.rate for c in cells if c.snr_db == snr_db and c.passed]
        frontier[float(snr_db)] = min(passing) if passing else None

    workable = [(s, r) for s, r in frontier.items() if r is not None]
    limit_snr = limit_rate = None
    if workable:
        s_min = min(s for s, _ in workable)
        limit_snr = (s_min, frontier[s_min])
        r_min = min(r for _, r in workable)
        s_at_rmin = min(s for s, r in workable if r == r_min)
        limit_rate = (s_at_rmin, r_min)

    return CoverageMap(snr_db_grid=snr_db_grid, rate_grid=rate_grid, cells=cells,
                       frontier=frontier, limit_snr=limit_snr, limit_rate=limit_rate,
                       criterion=criterion, thresholds=thresholds, n_trials=n_trials,
                       imse_threshold=imse_threshold)


def coverage_gain(snr_db: float, snr_conv_db: float, rate: float,
                  rate_conv: float) -> tuple[float, float, float]:
    """Power/bandwidth decomposition of a coverage extension, in dB.

    Returns (g, g_power, g_bw) with g = g_power + g_bw exactly;
    g_power = snr_conv_db - snr_db and g_bw = 10 log10(rate / rate_conv).
    """
    if rate <= 0 or rate_conv <= 0:
        raise NonPositiveInput(f"rates must be > 0, got {rate}, {rate_conv}")
    g_power = snr_conv_db - snr_db
    g_bw = 10.0 * np.log10(rate / rate_conv)
    return g_power + g_bw, g_power, float(g_bw)


# ------------------------------------------------------------------ output

def write_coverage_csv(cov: CoverageMap, path: str | Path) -> None:
    lines = ["snr_db,rate,d_niqe_mean,d_clip_mean,pass,n_trials"]
    for c in cov.cells:
        lines.append(f"{c.snr_db:.12g},{c.rate:.12g},{c.d_niqe_mean:.12g},"
                     f"{c.d_clip_mean:.12g},{int(c.passed)},{c.n_trials}")
    Path(path).write_text("\n".join(lines) + "\n")


def coverage_summary(cov: CoverageMap) -> str:
    out = [f"criterion: {cov.criterion}"]
    if cov.criterion == "imse_pred":
        out.append(f"threshold: imse_pred <= {cov.imse_threshold:.12g}")
    else:
        out.append(f"thresholds: d_niqe <= {cov.thresholds.d_niqe:.12g}, "
                   f"d_clip <= {cov.thresholds.d_clip:.12g}")
    out += [f"trials per cell: {cov.n_trials}",
           "frontier (snr_db -> min passing rate):"]
    for snr_db in cov.snr_db_grid:
        r = cov.frontier[float(snr_db)]
        out.append(f"  {snr_db:.12g} -> {'-' if r is None else f'{r:.12g}'}")
    if cov.limit_snr is not None:
        out.append(f"snr-limited point: snr_db={cov.limit_snr[0]:.12g} "
                   f"rate={cov.limit_snr[1]:.12g}")
        out.append(f"rate-limited point: snr_db={cov.limit_rate[0]:.12g} "
                   f"rate={cov.limit_rate[1]:.12g}")
    else:
        out.append("no passing cells")
    invalid = [c for c in cov.cells if not c.valid]
    for c in invalid:
        out.append(f"invalid cell snr_db={c.snr_db:.12g} rate={c.rate:.12g}: {c.error}")
    return "\n".join(out) + "\n"


def write_gnuplot_matrix(cov: CoverageMap, path: str | Path,
                         quantity: str = "d_niqe_mean") -> None:
    """Nonuniform-matrix heatmap data: first row snr grid, first column rate."""
    snrs = [float(s) for s in cov.snr_db_grid]
    rates = [float(r) for r in cov.rate_grid]
    by_key = {(c.snr_db, c.rate): c for c in cov.cells}
    lines = [" ".join([str(len(snrs))] + [f"{s:.12g}" for s in snrs])]
    for r in rates:
        vals = []
        for s in snrs:
            c = by_key[(s, r)]
            v = {"d_niqe_mean": c.d_niqe_mean, "d_clip_mean": c.d_clip_mean,
                 "pass": float(c.passed), "imse_pred": c.imse_pred}[quantity]
            vals.append(f"{v:.12g}")
        lines.append(" ".join([f"{r:.12g}"] + vals))
    Path(path).write_text("\n".join(lines) + "\n")
