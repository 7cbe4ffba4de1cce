#!/usr/bin/env python3
"""Monte Carlo BER curves per codec, with the exponential model fit.

Writes one `<codec>.csv` per codec in the format fit-ber consumes
(header snr_linear,ber) and, with --plot, a log-scale overview PNG.
"""

import argparse
from pathlib import Path

import numpy as np

from lightcom import link_models, phy


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--codecs", default="uncoded,repetition:3,hamming74,convolutional",
                    help="comma list of codec strings")
    ap.add_argument("--modulation", type=int, default=4)
    ap.add_argument("--snr-db", default="0:12:1.5", help="start:stop:step in dB")
    ap.add_argument("--bits", type=int, default=200_000,
                    help="info bits per point")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    start, stop, step = (float(v) for v in args.snr_db.split(":"))
    snr_db = np.arange(start, stop + step / 2, step)
    snr_lin = np.array([phy.db_to_linear(s) for s in snr_db])
    mod = phy.ModulationSpec(args.modulation)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    curves = {}
    for name in args.codecs.split(","):
        codec = phy.CodecSpec.parse(name.strip())
        bers = np.array([link_models.measure_ber(codec, mod, float(s), args.bits,
                                                 seed=args.seed + i)
                         for i, s in enumerate(snr_lin)])
        curves[str(codec)] = bers
        path = out / f"{str(codec).replace(':', '_')}.csv"
        link_models.write_ber_csv(snr_lin, bers, path)
        print(f"{codec}: wrote {path}")
        for s_db, s, b in zip(snr_db, snr_lin, bers):
            print(f"  snr {s_db:5.1f} dB ({s:7.3f} lin)  ber {b:.3e}")
        if str(codec) != "uncoded":
            try:
                fit = link_models.fit_coded_ber(snr_lin, bers)
                flag = " (slope clamped)" if fit.clamped else ""
                print(f"  fit: ber = {fit.alpha_c:.4g} * exp({fit.beta_c:.4g} snr), "
                      f"max rel err {fit.max_rel_err:.2f}{flag}")
            except link_models.AllZeroBer:
                print("  fit: skipped, all points error-free")

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(7, 5))
        for name, bers in curves.items():
            mask = bers > 0
            ax.semilogy(snr_db[mask], bers[mask], "o-", label=name)
        ax.set_xlabel("per-symbol SNR (dB)")
        ax.set_ylabel("post-decode BER")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "ber_curves.png", dpi=130)
        print(f"wrote {out / 'ber_curves.png'}")


if __name__ == "__main__":
    main()
