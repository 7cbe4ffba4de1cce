"""End-to-end experiment orchestration and artifact persistence.

A run is fully determined by (config, base_seed): per-trial randomness
comes from counter-based seed sequences keyed by (trial, stream), so
results are byte-identical across re-runs and worker counts. Output
artifacts live under the configured directory with a manifest listing
the config hash and a sha256 per file.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import allocation, coverage, fileio, link_models, phy, qoe
from .config import (RunConfig, SweepConfig, require_power, serialize_run_config,
                     serialize_sweep_config, validate_files)
from .errors import ConfigError
from .reconstruct import Reconstructor, reconstruct
from .source_codec import (BitPlaneFrame, Image, block_mean_encode, plane_weights,
                           rate_to_block, split_bitplanes, merge_bitplanes)

RESTORE_ENDPOINT_ENV = "LIGHTCOM_RESTORE_ENDPOINT"


@dataclass
class TrialRecord:
    trial: int
    seed: int
    snr_db: list[float]
    ber: list[float]
    imse_emp: float
    d_niqe: float = float("nan")
    d_clip: float = float("nan")
    passed: bool | None = None


@dataclass
class TrialContext:
    """Everything one trial needs; must stay picklable for worker pools."""

    frame: BitPlaneFrame = field(repr=False)
    original: Image = field(repr=False)
    powers: np.ndarray
    gains: np.ndarray              # complex amplitude h_k per plane
    noise_var: float
    codec: phy.CodecSpec
    mod: phy.ModulationSpec
    rec: Reconstructor
    base_seed: int
    model: qoe.PristineModel | None = None
    provider: object | None = None
    thresholds: qoe.QoEThresholds = field(default_factory=qoe.QoEThresholds)


def _trial_seed(base_seed: int, trial: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(trial,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def transmit_plane(bits: np.ndarray, sub: phy.SubStream, codec: phy.CodecSpec,
                   mod: phy.ModulationSpec, rng: np.random.Generator) -> np.ndarray:
    """One plane through encode -> modulate -> AWGN -> demap -> decode."""
    coded = phy.wcc_encode(bits, codec)
    symbols = phy.modulate(coded, mod)
    y = phy.transmit_awgn(symbols, sub, rng)
    hard, llrs = phy.equalize_demodulate(y, sub, mod)
    payload = llrs[:coded.size] if codec.soft_input else hard[:coded.size]
    return phy.wcc_decode(payload, codec, n_info=bits.size)


def run_chain_trial(ctx: TrialContext, trial: int,
                    keep_image: bool = False) -> tuple[TrialRecord, Image | None]:
    frame = ctx.frame
    k_planes = frame.bit_depth
    planes_hat = np.empty_like(frame.planes)
    bers, snr_dbs = [], []
    for k in range(k_planes):
        sub = phy.SubStream(index=k, gain=complex(ctx.gains[k]),
                            power=float(ctx.powers[k]), noise_var=ctx.noise_var)
        rng = phy.substream_rng(ctx.base_seed, trial, k)
        decoded = transmit_plane(frame.planes[k], sub, ctx.codec, ctx.mod, rng)
        planes_hat[k] = decoded
        bers.append(float(np.mean(decoded != frame.planes[k])))
        snr_dbs.append(10.0 * np.log10(sub.snr) if sub.snr > 0 else float("-inf"))
    frame_hat = BitPlaneFrame(width=frame.width, height=frame.height,
                              channels=frame.channels, bit_depth=frame.bit_depth,
                              block_b1=frame.block_b1, block_b2=frame.block_b2,
                              planes=planes_hat)
    imse_emp = link_models.imse(frame_hat, frame)
    rep_hat = merge_bitplanes(frame_hat)
    img_hat = reconstruct(rep_hat, ctx.rec)
    rec = TrialRecord(trial=trial, seed=_trial_seed(ctx.base_seed, trial),
                      snr_db=snr_dbs, ber=bers, imse_emp=imse_emp)
    if ctx.model is not None and ctx.provider is not None:
        score = qoe.qoe_evaluate(ctx.original, img_hat, ctx.model, ctx.provider)
        rec.d_niqe, rec.d_clip = score.d_niqe, score.d_clip
        rec.passed = score.meets(ctx.thresholds)
    return rec, (img_hat if keep_image else None)


def _pool_task(ctx: TrialContext, trial: int) -> tuple[TrialRecord, Image | None]:
    return run_chain_trial(ctx, trial, keep_image=(trial == 0))


# ------------------------------------------------------------- config glue

def resolve_total_power(cfg: RunConfig, n_planes: int,
                        code_rate: float) -> float:
    """Linear power budget from total_db, or from ebno_db via the
    equal-power unit-gain reference P = K sigma2 snr with
    snr = (Eb/N0) log2(M) R_c."""
    require_power(cfg)
    if cfg.power_db is not None:
        return phy.db_to_linear(cfg.power_db)
    mod = phy.ModulationSpec(cfg.modulation)
    snr = phy.ebno_to_snr(phy.db_to_linear(cfg.ebno_db), mod, code_rate)
    return n_planes * cfg.noise_var * snr


def build_problem(cfg: RunConfig, n_planes: int,
                  total_power: float) -> allocation.AllocationProblem:
    if cfg.gains_db is None:
        gains_sq = np.ones(n_planes)
    else:
        if len(cfg.gains_db) != n_planes:
            raise ConfigError(
                f"phy.gains_db: expected {n_planes} entries, got {len(cfg.gains_db)}")
        gains_sq = np.array([phy.db_to_linear(g) for g in cfg.gains_db])
    if cfg.coded_alpha is not None:
        mode = allocation.CodedMode(cfg.coded_alpha, cfg.coded_beta)
    else:
        if cfg.allocator == "wf" and cfg.codec != "uncoded":
            raise ConfigError(
                "power.coded_alpha: waterfilling over a coded chain needs the "
                "fitted (coded_alpha, coded_beta); run fit-ber first")
        mode = allocation.UncodedMode(cfg.modulation)
    return allocation.AllocationProblem(gains_sq=gains_sq, noise_var=cfg.noise_var,
                                        weights=plane_weights(n_planes),
                                        total_power=total_power, mode=mode)


def _build_reconstructor(cfg: RunConfig) -> Reconstructor:
    endpoint = os.environ.get(RESTORE_ENDPOINT_ENV, "") or cfg.remote_endpoint
    return Reconstructor(kind=cfg.reconstructor, endpoint=endpoint,
                         prompt=cfg.prompt)


def _build_provider(cfg: RunConfig):
    if cfg.embedding == "remote":
        return qoe.RemoteEmbeddingProvider(cfg.embed_endpoint)
    return qoe.BuiltinHistogramProvider()


def build_context(cfg: RunConfig) -> tuple[TrialContext, allocation.AllocationResult,
                                           allocation.AllocationProblem]:
    validate_files(cfg)
    img = fileio.read_image(cfg.image)
    rep = block_mean_encode(img, cfg.block[0], cfg.block[1], pad=cfg.pad)
    frame = split_bitplanes(rep)
    codec = phy.CodecSpec.parse(cfg.codec)
    mod = phy.ModulationSpec(cfg.modulation)
    total_power = resolve_total_power(cfg, frame.bit_depth, codec.code_rate)
    problem = build_problem(cfg, frame.bit_depth, total_power)
    result = allocation.allocate(problem, cfg.allocator)
    model = (qoe.load_pristine_model(cfg.pristine_model)
             if cfg.pristine_model else None)
    provider = _build_provider(cfg) if model is not None else None
    ctx = TrialContext(
        frame=frame, original=img, powers=result.powers,
        gains=np.sqrt(problem.gains_sq).astype(np.complex128),
        noise_var=cfg.noise_var, codec=codec, mod=mod,
        rec=_build_reconstructor(cfg), base_seed=cfg.base_seed, model=model,
        provider=provider,
        thresholds=qoe.QoEThresholds(cfg.d_niqe_threshold, cfg.d_clip_threshold))
    return ctx, result, problem


# ------------------------------------------------------------------ running

def run_trials(ctx: TrialContext, n_trials: int,
               workers: int) -> tuple[list[TrialRecord], Image | None]:
    if workers == 0:
        workers = os.cpu_count() or 1
    task = partial(_pool_task, ctx)
    if workers == 1 or n_trials == 1:
        outs = [task(t) for t in range(n_trials)]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, n_trials)) as pool:
            outs = list(pool.map(task, range(n_trials)))
    records = [r for r, _ in outs]   # map() preserves trial order
    first_image = outs[0][1]
    return records, first_image


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def trials_csv(records: list[TrialRecord], n_planes: int) -> str:
    head = (["seed"] + [f"snr_db_{k + 1}" for k in range(n_planes)]
            + [f"ber_{k + 1}" for k in range(n_planes)]
            + ["imse", "d_niqe", "d_clip", "pass"])
    lines = [",".join(head)]
    for r in records:
        row = ([str(r.seed)] + [_fmt(v) for v in r.snr_db] + [_fmt(v) for v in r.ber]
               + [_fmt(r.imse_emp), _fmt(r.d_niqe), _fmt(r.d_clip),
                  "" if r.passed is None else str(int(r.passed))])
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def run_summary(cfg: RunConfig, problem: allocation.AllocationProblem,
                result: allocation.AllocationResult,
                records: list[TrialRecord]) -> str:
    n_planes = len(records[0].ber)
    ber_mat = np.array([r.ber for r in records])
    out = [f"trials: {len(records)}",
           f"allocator: {cfg.allocator} ({result.method})",
           f"powers: {' '.join(_fmt(p) for p in result.powers)}",
           f"H_level: {'nan' if result.water_level is None else _fmt(result.water_level)}",
           f"predicted bers: {' '.join(_fmt(b) for b in result.bers)}",
           f"predicted imse: {_fmt(result.imse_pred)}",
           f"mean measured ber: {' '.join(_fmt(b) for b in ber_mat.mean(axis=0))}",
           f"mean empirical imse: {_fmt(float(np.mean([r.imse_emp for r in records])))}"]
    nq = np.array([r.d_niqe for r in records])
    if not np.all(np.isnan(nq)):
        dc = np.array([r.d_clip for r in records])
        passes = [r.passed for r in records if r.passed is not None]
        out.append(f"mean d_niqe: {_fmt(float(np.nanmean(nq)))}")
        out.append(f"mean d_clip: {_fmt(float(np.nanmean(dc)))}")
        out.append(f"pass rate: {_fmt(sum(passes) / len(passes))}")
    norm = float(np.dot(plane_weights(n_planes), np.ones(n_planes)))
    mean_imse = float(np.mean([r.imse_emp for r in records]))
    if mean_imse > 0:
        out.append(f"normalized imse: {_fmt(10 * np.log10(mean_imse / norm))} dB")
    return "\n".join(out) + "\n"


def write_manifest(out_dir: Path, config_text: str) -> None:
    manifest = {"config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
                "artifacts": {}}
    for f in sorted(out_dir.iterdir()):
        if f.name == "manifest.json" or not f.is_file():
            continue
        manifest["artifacts"][f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                      sort_keys=True) + "\n")


def run_end_to_end(cfg: RunConfig) -> list[TrialRecord]:
    """Run the configured chain for n_trials; write all artifacts."""
    ctx, result, problem = build_context(cfg)
    records, first_image = run_trials(ctx, cfg.n_trials, cfg.workers)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_text = serialize_run_config(cfg)
    (out_dir / "config.toml").write_text(config_text)
    (out_dir / "trials.csv").write_text(trials_csv(records, ctx.frame.bit_depth))
    (out_dir / "summary.txt").write_text(run_summary(cfg, problem, result, records))
    allocation.write_allocation_csv(problem, result, out_dir / "allocation.csv")
    if first_image is not None:
        ext = "pgm" if first_image.channels == 1 else "png"
        fileio.write_image(first_image, out_dir / f"recon_000.{ext}")
    write_manifest(out_dir, config_text)
    return records


# -------------------------------------------------------------------- sweep

GNUPLOT_HEATMAP = """set terminal pngcairo size 900,640
set output 'coverage.png'
set xlabel 'SNR (dB)'
set ylabel 'compression rate'
set view map
splot 'coverage_matrix.dat' nonuniform matrix with image notitle
"""


def make_cell_evaluator(cfg: RunConfig, img: Image):
    """Returns evaluate(snr_db, rate, seed) -> (d_niqe, d_clip) running one
    full chain trial, plus predict(snr_db, rate) -> predicted IMSE.

    Cell power follows the equal-power unit-gain reference
    P = K sigma2 snr_linear, so the grid snr reads as the per-symbol SNR
    an EP allocation would see on a flat channel.
    """
    codec = phy.CodecSpec.parse(cfg.codec)
    mod = phy.ModulationSpec(cfg.modulation)
    rec = _build_reconstructor(cfg)
    model = qoe.load_pristine_model(cfg.pristine_model) if cfg.pristine_model else None
    provider = _build_provider(cfg) if model is not None else None
    rep_cache: dict[float, BitPlaneFrame] = {}

    def frame_for(rate: float) -> BitPlaneFrame:
        if rate not in rep_cache:
            b1, b2 = rate_to_block(rate)
            rep_cache[rate] = split_bitplanes(
                block_mean_encode(img, b1, b2, pad=cfg.pad))
        return rep_cache[rate]

    def problem_for(snr_db: float) -> allocation.AllocationProblem:
        k = img.bit_depth
        total = k * cfg.noise_var * phy.db_to_linear(snr_db)
        return build_problem(cfg, k, total)

    def evaluate(snr_db: float, rate: float, seed: int) -> tuple[float, float]:
        if model is None:
            # no QoE stack configured: diagnostics unavailable, pass/fail
            # must come from the imse_pred criterion
            return float("nan"), float("nan")
        frame = frame_for(rate)
        problem = problem_for(snr_db)
        result = allocation.allocate(problem, cfg.allocator)
        ctx = TrialContext(frame=frame, original=img, powers=result.powers,
                           gains=np.sqrt(problem.gains_sq).astype(np.complex128),
                           noise_var=cfg.noise_var, codec=codec, mod=mod, rec=rec,
                           base_seed=seed, model=model, provider=provider)
        record, _ = run_chain_trial(ctx, 0)
        return record.d_niqe, record.d_clip

    def predict(snr_db: float, rate: float) -> float:
        return allocation.allocate(problem_for(snr_db), cfg.allocator).imse_pred

    return evaluate, predict


def run_sweep(sweep: SweepConfig) -> coverage.CoverageMap:
    cfg = sweep.base
    validate_files(cfg)
    if sweep.criterion == "qoe" and not cfg.pristine_model:
        raise ConfigError("qoe.pristine_model: required for the qoe criterion")
    img = fileio.read_image(cfg.image)
    evaluate, predict = make_cell_evaluator(cfg, img)
    cov = coverage.sweep_coverage(
        sweep.snr_db, sweep.rates, cfg.n_trials, evaluate,
        thresholds=qoe.QoEThresholds(cfg.d_niqe_threshold, cfg.d_clip_threshold),
        criterion=sweep.criterion, imse_threshold=sweep.imse_threshold,
        predict_imse=predict, base_seed=cfg.base_seed)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_text = serialize_sweep_config(sweep)
    (out_dir / "config.toml").write_text(config_text)
    coverage.write_coverage_csv(cov, out_dir / "coverage.csv")
    (out_dir / "summary.txt").write_text(coverage.coverage_summary(cov))
    quantity = "imse_pred" if sweep.criterion == "imse_pred" else "d_niqe_mean"
    coverage.write_gnuplot_matrix(cov, out_dir / "coverage_matrix.dat",
                                  quantity=quantity)
    (out_dir / "coverage.gp").write_text(GNUPLOT_HEATMAP)
    write_manifest(out_dir, config_text)
    return cov
