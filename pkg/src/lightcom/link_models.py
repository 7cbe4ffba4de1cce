"""Link-level error models and distortion measures.

Uncoded square M-QAM over AWGN follows the standard Gray-mapping
approximation ber(snr) = alpha_u Q(beta_u sqrt(snr)) with
alpha_u = (4 / log2 M)(1 - 1/sqrt(M)) and beta_u = sqrt(3 / (M - 1)).
Coded sub-channels use the two-parameter surrogate
ber(snr) = alpha_c exp(beta_c snr), fitted by least squares in log domain.

The importance-weighted mean squared error (IMSE) of a bit-plane frame is
sum_k gamma_k E_k / S where E_k counts bit errors on plane k, S is the
plane length and gamma_k = 4**(k-1).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erfc

from . import phy
from .errors import (AllZeroBer, BurstTooLong, FormatError, InsufficientData,
                     LengthMismatch, NegativeSnr, ShapeMismatch)
from .source_codec import BitPlaneFrame, CompressedRep, plane_weights


def q_function(x: np.ndarray | float) -> np.ndarray | float:
    """Gaussian tail probability Q(x) = 0.5 erfc(x / sqrt(2))."""
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / np.sqrt(2.0))


def qam_alpha_beta(order: int) -> tuple[float, float]:
    m = int(round(np.log2(order)))
    if 2 ** m != order or m % 2:
        raise ValueError(f"order must be an even power of two, got {order}")
    alpha = (4.0 / m) * (1.0 - 1.0 / np.sqrt(order))
    beta = np.sqrt(3.0 / (order - 1))
    return alpha, beta


def ber_uncoded(snr: np.ndarray | float, order: int = 4) -> np.ndarray | float:
    """Gray-mapped M-QAM bit error probability at linear per-symbol SNR."""
    snr_arr = np.asarray(snr, dtype=np.float64)
    if np.any(snr_arr < 0):
        raise NegativeSnr(f"snr must be >= 0, got min {snr_arr.min()}")
    alpha, beta = qam_alpha_beta(order)
    out = alpha * q_function(beta * np.sqrt(snr_arr))
    return out if np.ndim(snr) else float(out)


@dataclass
class CodedBerModel:
    """ber(snr) = alpha_c * exp(beta_c * snr), beta_c <= 0."""

    alpha_c: float
    beta_c: float
    max_rel_err: float = float("nan")
    clamped: bool = False

    def ber(self, snr: np.ndarray | float) -> np.ndarray | float:
        snr_arr = np.asarray(snr, dtype=np.float64)
        if np.any(snr_arr < 0):
            raise NegativeSnr(f"snr must be >= 0, got min {snr_arr.min()}")
        out = self.alpha_c * np.exp(self.beta_c * snr_arr)
        return out if np.ndim(snr) else float(out)


def fit_coded_ber(snr: np.ndarray, ber: np.ndarray) -> CodedBerModel:
    """Least-squares fit of ln(ber) = ln(alpha_c) + beta_c * snr.

    Zero-BER samples carry no log-domain information and are dropped; at
    least two positive samples must remain. A positive fitted slope is
    clamped to 0 with a warning and flagged on the model.
    """
    snr = np.asarray(snr, dtype=np.float64)
    ber = np.asarray(ber, dtype=np.float64)
    if snr.shape != ber.shape or snr.ndim != 1:
        raise LengthMismatch(f"snr {snr.shape} and ber {ber.shape} must be equal-length vectors")
    if np.any(snr < 0):
        raise NegativeSnr("fit requires snr >= 0")
    if np.any(ber < 0) or np.any(ber > 1):
        raise ValueError("ber samples must lie in [0, 1]")
    keep = ber > 0
    if not keep.any():
        raise AllZeroBer("all ber samples are zero; nothing to fit")
    if keep.sum() < 2:
        raise InsufficientData(f"need >= 2 positive ber samples, got {int(keep.sum())}")
    x, y = snr[keep], np.log(ber[keep])
    design = np.stack([np.ones_like(x), x], axis=1)
    (ln_alpha, beta), *_ = np.linalg.lstsq(design, y, rcond=None)
    clamped = False
    if beta > 0:
        warnings.warn(f"fitted beta_c = {beta:.4g} > 0 clamped to 0; "
                      "ber samples do not decrease with snr")
        beta, clamped = 0.0, True
        ln_alpha = float(np.mean(y))   # refit intercept under the clamp
    model = CodedBerModel(alpha_c=float(np.exp(ln_alpha)), beta_c=float(beta),
                          clamped=clamped)
    pred = model.alpha_c * np.exp(model.beta_c * x)
    model.max_rel_err = float(np.max(np.abs(pred - ber[keep]) / ber[keep]))
    return model


def write_coded_model(model: CodedBerModel, path: str | Path) -> None:
    """Single-row CSV record: alpha_c,beta_c,max_rel_err."""
    with open(path, "w", newline="") as fh:
        fh.write("alpha_c,beta_c,max_rel_err\n")
        fh.write(f"{model.alpha_c:.12g},{model.beta_c:.12g},{model.max_rel_err:.12g}\n")


def read_coded_model(path: str | Path) -> CodedBerModel:
    lines = Path(path).read_text().strip().splitlines()
    if len(lines) != 2 or lines[0].strip() != "alpha_c,beta_c,max_rel_err":
        raise FormatError(f"{path}: not a coded ber model record")
    try:
        alpha, beta, err = (float(v) for v in lines[1].split(","))
    except ValueError as exc:
        raise FormatError(f"{path}: bad model row: {exc}") from None
    if alpha <= 0 or beta > 0:
        raise FormatError(f"{path}: invalid parameters alpha={alpha}, beta={beta}")
    return CodedBerModel(alpha_c=alpha, beta_c=beta, max_rel_err=err)


def write_ber_csv(snr: np.ndarray, ber: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_linear", "ber"])
        for s, b in zip(np.asarray(snr), np.asarray(ber)):
            writer.writerow([f"{s:.12g}", f"{b:.12g}"])


def read_ber_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["snr_linear", "ber"]:
        raise FormatError(f"{path}: expected header 'snr_linear,ber'")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    except ValueError as exc:
        raise FormatError(f"{path}: bad sample row: {exc}") from None
    if data.size == 0:
        raise FormatError(f"{path}: no samples")
    return data[:, 0], data[:, 1]


# -------------------------------------------------------------------- IMSE

def imse(received: BitPlaneFrame, reference: BitPlaneFrame) -> float:
    """Importance-weighted bit error distortion between two frames."""
    if received.planes.shape != reference.planes.shape:
        raise ShapeMismatch(
            f"frame shapes differ: {received.planes.shape} vs {reference.planes.shape}")
    if received.bit_depth != reference.bit_depth:
        raise ShapeMismatch("bit depths differ")
    s = reference.n_samples
    errors = (received.planes != reference.planes).sum(axis=1)
    return float(np.dot(plane_weights(reference.bit_depth), errors) / s)


def imse_predicted(bers: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Expected IMSE from per-plane BERs, plane 1 (LSB) first.

    weights defaults to the significance weights 4**(k-1).
    """
    bers = np.asarray(bers, dtype=np.float64)
    if bers.ndim != 1 or bers.size < 1:
        raise ValueError("bers must be a nonempty vector")
    if np.any(~np.isfinite(bers)) or np.any(bers < 0) or np.any(bers > 1):
        raise ValueError("per-plane ber values must lie in [0, 1]")
    w = plane_weights(bers.size) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != bers.shape:
        raise LengthMismatch(f"weights shape {w.shape} != bers shape {bers.shape}")
    return float(np.dot(w, bers))


# ------------------------------------------------------- residual injectors

@dataclass(frozen=True)
class WeakGaussian:
    """I.i.d. additive Gaussian perturbation on every quantized sample."""

    sigma_sq: float

    def __post_init__(self) -> None:
        if self.sigma_sq < 0:
            raise ValueError("sigma_sq must be >= 0")


@dataclass(frozen=True)
class StrongBurst:
    """Gaussian perturbation on disjoint runs of run_length samples, placed
    uniformly at random until at least `budget` samples are corrupted
    (default: a single run)."""

    sigma_sq: float
    run_length: int
    budget: int | None = None

    def __post_init__(self) -> None:
        if self.sigma_sq < 0:
            raise ValueError("sigma_sq must be >= 0")
        if self.run_length < 1:
            raise ValueError("run_length must be >= 1")
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be >= 1")


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


def inject_residual_error(rep: CompressedRep, spec: WeakGaussian | StrongBurst,
                          seed: int) -> CompressedRep:
    """Perturb quantized samples, re-round half away from zero, clamp to range."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    flat = rep.samples.reshape(-1).astype(np.float64)
    n = flat.size
    if isinstance(spec, WeakGaussian):
        noise = rng.normal(0.0, np.sqrt(spec.sigma_sq), n)
    elif isinstance(spec, StrongBurst):
        length = spec.run_length
        if length > n:
            raise BurstTooLong(f"run length {length} exceeds {n} samples")
        budget = spec.budget if spec.budget is not None else length
        if budget > n:
            raise BurstTooLong(f"budget {budget} exceeds {n} samples")
        n_runs = -(-budget // length)
        occupied = np.zeros(n, dtype=bool)
        placed = 0
        for start in rng.permutation(n - length + 1):
            if occupied[start:start + length].any():
                continue
            occupied[start:start + length] = True
            placed += 1
            if placed == n_runs:
                break
        if placed < n_runs:
            raise BurstTooLong(
                f"could not place {n_runs} disjoint runs of {length} in {n} samples")
        noise = np.zeros(n)
        idx = np.nonzero(occupied)[0]
        noise[idx] = rng.normal(0.0, np.sqrt(spec.sigma_sq), idx.size)
    else:
        raise TypeError(f"unknown residual error spec {type(spec).__name__}")
    corrupted = np.clip(_round_half_away(flat + noise), 0, rep.max_value)
    return CompressedRep(width=rep.width, height=rep.height, channels=rep.channels,
                         bit_depth=rep.bit_depth, block_b1=rep.block_b1,
                         block_b2=rep.block_b2,
                         samples=corrupted.astype(np.int64).reshape(rep.samples.shape))


# ---------------------------------------------------------- MC measurement

def measure_ber(codec: phy.CodecSpec, mod: phy.ModulationSpec, snr_linear: float,
                n_info_bits: int, seed: int) -> float:
    """Monte Carlo post-decode BER of one sub-channel at a given SNR.

    Unit gain and unit noise variance; transmit power is then snr_linear.
    """
    if snr_linear < 0:
        raise NegativeSnr("snr must be >= 0")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    info = rng.integers(0, 2, n_info_bits, dtype=np.uint8)
    coded = phy.wcc_encode(info, codec)
    symbols = phy.modulate(coded, mod)
    sub = phy.SubStream(index=0, gain=1.0 + 0.0j, power=snr_linear, noise_var=1.0)
    y = phy.transmit_awgn(symbols, sub, rng)
    hard, llrs = phy.equalize_demodulate(y, sub, mod)
    payload = llrs[:coded.size] if codec.soft_input else hard[:coded.size]
    decoded = phy.wcc_decode(payload, codec, n_info=n_info_bits)
    return float(np.mean(decoded != info))
