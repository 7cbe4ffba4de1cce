"""Command-line surface.

Exit codes: 0 success, 1 usage error, 2 runtime error. SNR/power/gain
values are dB unless suffixed with `lin` (e.g. `--power 10` is 10 dB,
`--power 10lin` is 10 in linear units); noise variance is always linear.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import allocation, coverage, fileio, link_models, qoe, runner
from .config import load_run_config, load_sweep_config
from .errors import LightcomError
from .phy import db_to_linear
from .reconstruct import Reconstructor, reconstruct
from .source_codec import block_mean_encode, rate_to_block, split_bitplanes

PROG = "lightcom"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:   # argparse default exits with 2
        raise UsageError(message)


def parse_level(text: str) -> float:
    """dB unless suffixed `lin`; returns linear value."""
    text = text.strip()
    try:
        if text.endswith("lin"):
            return float(text[:-3])
        return db_to_linear(float(text))
    except ValueError:
        raise UsageError(f"bad level value {text!r} (number, optionally `lin`-suffixed)") from None


def parse_level_list(text: str) -> list[float]:
    return [parse_level(tok) for tok in text.split(",") if tok.strip()]


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"bad numeric list {text!r}") from None


def parse_block(text: str) -> tuple[int, int]:
    try:
        b1, b2 = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"bad block {text!r}, expected B1xB2 (e.g. 4x4)") from None
    if b1 < 1 or b2 < 1:
        raise UsageError("block dimensions must be >= 1")
    return b1, b2


def _fmt(v: float) -> str:
    return f"{v:.12g}"


# ------------------------------------------------------------- subcommands

def cmd_encode(args) -> int:
    if (args.rate is None) == (args.block is None):
        raise UsageError("encode: give exactly one of --rate or --block")
    if args.rate is not None:
        try:
            b1, b2 = rate_to_block(args.rate)
        except ValueError as exc:
            raise UsageError(f"--rate: {exc}") from None
    else:
        b1, b2 = parse_block(args.block)
    img = fileio.read_image(args.input)
    rep = block_mean_encode(img, b1, b2, pad=args.pad)
    fileio.write_rep(rep, args.out)
    print(f"wrote {args.out}: {rep.grid_width}x{rep.grid_height}x{rep.channels} "
          f"block {b1}x{b2} rate {_fmt(rep.rate)}")
    return 0


def cmd_reconstruct(args) -> int:
    rep = fileio.read_rep(args.input)
    endpoint = os.environ.get(runner.RESTORE_ENDPOINT_ENV, "") or args.endpoint
    rec = Reconstructor(kind=args.kind, endpoint=endpoint, timeout=args.timeout,
                        prompt=args.prompt)
    img = reconstruct(rep, rec)
    fileio.write_image(img, args.out)
    print(f"wrote {args.out}: {img.width}x{img.height}x{img.channels}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if args.trials is not None:
        cfg.n_trials = args.trials
    if args.seed is not None:
        cfg.base_seed = args.seed
    records = runner.run_end_to_end(cfg)
    print((Path(cfg.out_dir) / "summary.txt").read_text(), end="")
    print(f"artifacts in {cfg.out_dir} ({len(records)} trials)")
    return 0


def cmd_allocate(args) -> int:
    gains = parse_level_list(args.gains)
    weights = parse_float_list(args.weights)
    if args.k != len(gains) or args.k != len(weights):
        raise UsageError(f"--k {args.k} does not match gains ({len(gains)}) "
                         f"and weights ({len(weights)})")
    if args.mode == "coded":
        if args.alpha is None or args.beta is None:
            raise UsageError("coded mode needs --alpha and --beta")
        mode = allocation.CodedMode(args.alpha, args.beta)
    else:
        mode = allocation.UncodedMode(args.modulation)
    problem = allocation.AllocationProblem(
        gains_sq=np.array(gains), noise_var=args.sigma2,
        weights=np.array(weights), total_power=parse_level(args.power), mode=mode)
    result = allocation.allocate(problem, args.allocator)
    print(f"powers: {','.join(_fmt(p) for p in result.powers)}")
    level = "nan" if result.water_level is None else _fmt(result.water_level)
    print(f"H_level: {level}")
    print(f"ber_pred: {','.join(_fmt(b) for b in result.bers)}")
    print(f"imse_pred: {_fmt(result.imse_pred)}")
    if args.out:
        allocation.write_allocation_csv(problem, result, args.out)
    return 0


def cmd_fit_ber(args) -> int:
    snr, ber = link_models.read_ber_csv(args.input)
    model = link_models.fit_coded_ber(snr, ber)
    if model.clamped:
        print("warning: fitted slope clamped to 0", file=sys.stderr)
    link_models.write_coded_model(model, args.out)
    print(f"alpha_c: {_fmt(model.alpha_c)}")
    print(f"beta_c: {_fmt(model.beta_c)}")
    print(f"max_rel_err: {_fmt(model.max_rel_err)}")
    return 0


def cmd_niqe(args) -> int:
    model = qoe.load_pristine_model(args.model)
    img = fileio.read_image(args.input)
    score, clamped = qoe.niqe_report(img, model)
    if clamped:
        print("note: score clamped to 100", file=sys.stderr)
    print(_fmt(score))
    return 0


def cmd_fit_pristine(args) -> int:
    corpus = [fileio.read_image(p) for p in args.corpus]
    model = qoe.fit_pristine_model(corpus, patch_size=args.patch_size,
                                   corpus_id=args.corpus_id)
    qoe.save_pristine_model(model, args.out)
    print(f"wrote {args.out}: {model.mu.size} features from {len(corpus)} images")
    return 0


def cmd_sweep_coverage(args) -> int:
    sweep = load_sweep_config(args.config)
    if args.out:
        sweep.base.out_dir = args.out
    cov = runner.run_sweep(sweep)
    print(coverage.coverage_summary(cov), end="")
    print(f"artifacts in {sweep.base.out_dir}")
    return 0


def cmd_embed_distance(args) -> int:
    if args.provider == "remote":
        if not args.endpoint:
            raise UsageError("remote provider needs --endpoint")
        provider = qoe.RemoteEmbeddingProvider(args.endpoint)
    else:
        provider = qoe.BuiltinHistogramProvider()
    a = fileio.read_image(args.a)
    b = fileio.read_image(args.b)
    print(_fmt(qoe.semantic_distance(a, b, provider)))
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> _Parser:
    p = _Parser(prog=PROG, description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="block-mean encode an image to LCR1",
                         parents=[], add_help=True)
    enc.add_argument("--input", required=True, help="input image (.png/.pgm)")
    enc.add_argument("--out", required=True, help="output .lcr file")
    enc.add_argument("--rate", type=float, help="compression rate, must be 1/(b*b)")
    enc.add_argument("--block", help="explicit block B1xB2")
    enc.add_argument("--pad", action="store_true",
                     help="edge-pad when blocks do not divide the image")
    enc.set_defaults(func=cmd_encode)

    rc = sub.add_parser("reconstruct", help="upscale an LCR1 file to an image")
    rc.add_argument("--input", required=True, help="input .lcr file")
    rc.add_argument("--out", required=True, help="output image (.png/.pgm)")
    rc.add_argument("--kind", default="bilinear",
                    choices=["nearest", "bilinear", "bicubic", "remote"])
    rc.add_argument("--endpoint", default="", help="restoration service base URL")
    rc.add_argument("--prompt", default=None, help="optional text prompt (remote)")
    rc.add_argument("--timeout", type=float, default=30.0)
    rc.set_defaults(func=cmd_reconstruct)

    sim = sub.add_parser("simulate", help="run end-to-end chain trials from a config")
    sim.add_argument("--config", required=True, help="TOML run config")
    sim.add_argument("--out", default=None, help="override output directory")
    sim.add_argument("--workers", type=int, default=None)
    sim.add_argument("--trials", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.set_defaults(func=cmd_simulate)

    al = sub.add_parser("allocate", help="power allocation across sub-channels")
    al.add_argument("--k", type=int, required=True, help="number of sub-channels")
    al.add_argument("--gains", required=True,
                    help="comma list of |h_k|^2, dB unless `lin`-suffixed")
    al.add_argument("--weights", required=True, help="comma list of gamma_k (linear)")
    al.add_argument("--power", required=True,
                    help="total power, dB unless `lin`-suffixed")
    al.add_argument("--mode", required=True, choices=["uncoded", "coded"])
    al.add_argument("--alpha", type=float, default=None, help="coded alpha_c")
    al.add_argument("--beta", type=float, default=None, help="coded beta_c (< 0)")
    al.add_argument("--modulation", type=int, default=4, help="M for uncoded mode")
    al.add_argument("--sigma2", type=float, default=1.0,
                    help="noise variance, linear (default 1)")
    al.add_argument("--allocator", default="wf", choices=["wf", "ep"])
    al.add_argument("--out", default=None, help="optional allocation CSV path")
    al.set_defaults(func=cmd_allocate)

    fb = sub.add_parser("fit-ber", help="fit the exponential coded BER model")
    fb.add_argument("--input", required=True, help="CSV with header snr_linear,ber")
    fb.add_argument("--out", required=True, help="output model record")
    fb.set_defaults(func=cmd_fit_ber)

    nq = sub.add_parser("niqe", help="score an image against a pristine model")
    nq.add_argument("--model", required=True, help="NIQE1 model file")
    nq.add_argument("--input", required=True, help="image to score")
    nq.set_defaults(func=cmd_niqe)

    fp = sub.add_parser("fit-pristine", help="fit a pristine model from images")
    fp.add_argument("--out", required=True, help="output NIQE1 model file")
    fp.add_argument("--corpus", nargs="+", required=True, help=">= 5 sharp images")
    fp.add_argument("--patch-size", type=int, default=96)
    fp.add_argument("--corpus-id", default="")
    fp.set_defaults(func=cmd_fit_pristine)

    sw = sub.add_parser("sweep-coverage", help="perceived-coverage sweep over (snr, r)")
    sw.add_argument("--config", required=True, help="TOML config with a [sweep] table")
    sw.add_argument("--out", default=None, help="override output directory")
    sw.set_defaults(func=cmd_sweep_coverage)

    ed = sub.add_parser("embed-distance", help="semantic distance between two images")
    ed.add_argument("--a", required=True)
    ed.add_argument("--b", required=True)
    ed.add_argument("--provider", default="builtin", choices=["builtin", "remote"])
    ed.add_argument("--endpoint", default="", help="embedding service base URL")
    ed.set_defaults(func=cmd_embed_distance)
    return p


def cli_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:   # --help prints and exits 0
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except (LightcomError, OSError) as exc:
        print(f"{PROG}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"{PROG}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
