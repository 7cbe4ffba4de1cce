#!/usr/bin/env python3
"""Perceived-coverage sweep demo on a synthetic image.

Default mode sweeps the predicted-IMSE criterion (no perceptual stack
needed, runs in seconds). --qoe fits a small pristine model from a
generated corpus first and sweeps the full QoE criterion with the
builtin embedding provider; expect a few minutes.
"""

import argparse
import sys
from pathlib import Path

from lightcom import fileio, qoe, runner
from lightcom.config import RunConfig, SweepConfig
from lightcom.coverage import coverage_summary

sys.path.insert(0, str(Path(__file__).parent))
from make_test_images import synth_image   # noqa: E402


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--qoe", action="store_true",
                    help="sweep the QoE criterion instead of predicted IMSE")
    ap.add_argument("--trials", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    img_path = out / "scene.pgm"
    fileio.write_image(synth_image(args.seed, 384), img_path)

    cfg = RunConfig(image=str(img_path), codec="uncoded", modulation=4,
                    noise_var=1.0, allocator="wf", n_trials=args.trials,
                    base_seed=args.seed, workers=1, out_dir=str(out))
    if args.qoe:
        corpus = [synth_image(args.seed + 1 + i, 384) for i in range(10)]
        model_path = out / "pristine.npz"
        model = qoe.fit_pristine_model(corpus, corpus_id="demo-corpus")
        qoe.save_pristine_model(model, model_path)
        print(f"fitted pristine model -> {model_path}")
        cfg.pristine_model = str(model_path)
        # the naturalness score is no-reference and scales with the corpus,
        # so anchor the pass threshold to the pristine scene's own score
        sharp = qoe.niqe_score(fileio.read_image(img_path), model)
        cfg.d_niqe_threshold = sharp + 5.0
        print(f"scene scores {sharp:.2f} pristine; "
              f"threshold set to {cfg.d_niqe_threshold:.2f}")
        sweep = SweepConfig(base=cfg, snr_db=[-5.0, 0.0, 5.0, 10.0, 15.0],
                            rates=[1.0, 0.25, 0.0625], criterion="qoe")
    else:
        sweep = SweepConfig(base=cfg, snr_db=[-5.0, 0.0, 5.0, 10.0, 15.0],
                            rates=[1.0, 0.25, 0.0625], criterion="imse_pred",
                            imse_threshold=100.0)

    cov = runner.run_sweep(sweep)
    print(coverage_summary(cov), end="")
    print(f"artifacts in {out} (render the heatmap with: gnuplot coverage.gp)")


if __name__ == "__main__":
    main()
