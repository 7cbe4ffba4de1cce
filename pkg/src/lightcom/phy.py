"""Physical layer: weak channel codes, Gray-mapped M-QAM, AWGN sub-channels.

Conventions pinned here and relied on everywhere else:

  * Bits enter the modulator MSB-of-symbol first; for square M-QAM the
    first half of each bit group selects the quadrature (imaginary) axis
    and the second half the in-phase axis. With M = 4 this reproduces the
    QPSK map 00 -> (+1+j)/sqrt(2), 01 -> (-1+j)/sqrt(2),
    11 -> (-1-j)/sqrt(2), 10 -> (+1-j)/sqrt(2).
  * Per-axis amplitudes follow a reflected Gray code with bit group 0
    on the positive extreme.
  * Constellations are normalized to unit average symbol energy.
  * LLR sign convention: positive means bit 0 is more likely. Hard bits
    are always (llr < 0), so hard and soft decisions can never disagree
    about a bit's sign.
  * Channel model y = h * sqrt(p) * x + n with n circularly symmetric
    complex Gaussian, per-component variance sigma2 / 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMode, LengthMismatch

_CONV_GENERATORS = (0o171, 0o133)
_CONV_K = 7
_N_STATES = 1 << (_CONV_K - 1)

# Hamming(7,4): systematic G = [I4 | P] with the parity rows below; a data
# word d maps to codeword [d, d @ P]. Parity check H = [P^T | I3].
_HAMMING_P = np.array([[1, 1, 0],
                       [1, 0, 1],
                       [0, 1, 1],
                       [1, 1, 1]], dtype=np.uint8)


@dataclass(frozen=True)
class CodecSpec:
    """Weak channel code selector.

    kind is one of "uncoded", "repetition", "hamming74", "convolutional".
    repeat applies to repetition only and must be odd.
    """

    kind: str = "uncoded"
    repeat: int = 3

    def __post_init__(self) -> None:
        if self.kind not in ("uncoded", "repetition", "hamming74", "convolutional"):
            raise InvalidMode(f"unknown codec kind {self.kind!r}")
        if self.kind == "repetition" and (self.repeat < 1 or self.repeat % 2 == 0):
            raise ValueError(f"repetition factor must be odd and >= 1, got {self.repeat}")

    @property
    def code_rate(self) -> float:
        if self.kind == "uncoded":
            return 1.0
        if self.kind == "repetition":
            return 1.0 / self.repeat
        if self.kind == "hamming74":
            return 4.0 / 7.0
        return 0.5  # convolutional; termination overhead excluded

    @property
    def soft_input(self) -> bool:
        """Whether the decoder expects LLRs rather than hard bits."""
        return self.kind in ("repetition", "convolutional")

    def coded_length(self, n_info: int) -> int:
        """Exact encoder output length for n_info input bits."""
        if self.kind == "uncoded":
            return n_info
        if self.kind == "repetition":
            return n_info * self.repeat
        if self.kind == "hamming74":
            return 7 * ((n_info + 3) // 4)
        return 2 * (n_info + _CONV_K - 1)

    @classmethod
    def parse(cls, text: str) -> "CodecSpec":
        """Parse "uncoded", "hamming74", "convolutional" or "repetition:N"."""
        name, _, arg = text.partition(":")
        name = name.strip().lower()
        if name == "repetition":
            return cls(kind=name, repeat=int(arg) if arg else 3)
        if arg:
            raise ValueError(f"codec {name!r} takes no argument")
        return cls(kind=name)

    def __str__(self) -> str:
        if self.kind == "repetition":
            return f"repetition:{self.repeat}"
        return self.kind


@dataclass(frozen=True)
class ModulationSpec:
    """Square M-QAM with reflected-Gray per-axis labeling."""

    order: int = 4
    bits_per_symbol: int = field(init=False)
    axis_levels: int = field(init=False)
    scale: float = field(init=False)

    def __post_init__(self) -> None:
        m = int(round(np.log2(self.order)))
        if 2 ** m != self.order or m % 2:
            raise InvalidMode(
                f"order must be an even power of two (4, 16, 64, ...), got {self.order}")
        object.__setattr__(self, "bits_per_symbol", m)
        object.__setattr__(self, "axis_levels", 2 ** (m // 2))
        object.__setattr__(self, "scale", 1.0 / np.sqrt(2.0 * (self.order - 1) / 3.0))

    @property
    def axis_bits(self) -> int:
        return self.bits_per_symbol // 2

    def axis_amplitudes(self) -> np.ndarray:
        """Unnormalized odd amplitudes indexed by Gray label; entry g is the
        amplitude carrying axis bit group g (MSB first)."""
        n = self.axis_levels
        idx = np.arange(n)
        gray = idx ^ (idx >> 1)
        amps = np.empty(n)
        amps[gray] = n - 1 - 2 * idx      # position 0 holds +(n-1), descending
        return amps

    def axis_bit_table(self) -> np.ndarray:
        """(axis_levels, axis_bits) bit patterns, row g = bits of label g."""
        g = np.arange(self.axis_levels, dtype=np.uint8)[:, None]
        shifts = np.arange(self.axis_bits - 1, -1, -1, dtype=np.uint8)
        return (g >> shifts) & 1


@dataclass
class SubStream:
    """One bit-plane's sub-channel: complex gain, transmit power, noise level."""

    index: int
    gain: complex
    power: float
    noise_var: float

    def __post_init__(self) -> None:
        if self.power < 0:
            raise ValueError(f"power must be >= 0, got {self.power}")
        if self.noise_var <= 0:
            raise ValueError(f"noise_var must be > 0, got {self.noise_var}")

    @property
    def snr(self) -> float:
        return self.power * abs(self.gain) ** 2 / self.noise_var


def substream_rng(base_seed: int, trial: int, stream: int) -> np.random.Generator:
    """Deterministic per-(trial, stream) generator; independent across keys."""
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=base_seed, spawn_key=(trial, stream))))


def ebno_to_snr(ebno_linear: float, mod: ModulationSpec, code_rate: float) -> float:
    """Per-symbol SNR from Eb/N0: snr = (Eb/N0) * log2(M) * R_c."""
    if ebno_linear < 0:
        raise ValueError("Eb/N0 must be >= 0 in linear units")
    return ebno_linear * mod.bits_per_symbol * code_rate


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    if x <= 0:
        raise ValueError(f"cannot express {x} in dB")
    return 10.0 * np.log10(x)


# ------------------------------------------------------------------ codecs

def _as_bits(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValueError("bit array must be one-dimensional")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("bits must be 0 or 1")
    return bits.astype(np.uint8, copy=False)


def wcc_encode(bits: np.ndarray, spec: CodecSpec) -> np.ndarray:
    """Encode an info-bit vector. Hamming pads the last block with zeros;
    the convolutional code is zero-terminated (K-1 tail bits)."""
    bits = _as_bits(bits)
    if spec.kind == "uncoded":
        return bits.copy()
    if spec.kind == "repetition":
        return np.repeat(bits, spec.repeat)
    if spec.kind == "hamming74":
        n_blk = (bits.size + 3) // 4
        d = np.zeros((n_blk, 4), dtype=np.uint8)
        d.reshape(-1)[:bits.size] = bits
        parity = (d @ _HAMMING_P) % 2
        return np.concatenate([d, parity], axis=1).reshape(-1)
    return _conv_encode(bits)


def wcc_decode(data: np.ndarray, spec: CodecSpec,
               n_info: int | None = None) -> np.ndarray:
    """Decode hard bits (integer array) or LLRs (float array, positive = bit 0).

    Repetition and convolutional decoding use the soft metric when LLRs are
    given; Hamming(7,4) and uncoded always reduce to hard decisions first.
    n_info trims block-alignment padding off the tail.
    """
    data = np.asarray(data)
    soft = np.issubdtype(data.dtype, np.floating)
    llrs = data.astype(np.float64) if soft else 1.0 - 2.0 * _as_bits(data).astype(np.float64)
    if spec.kind == "uncoded":
        out = (llrs < 0).astype(np.uint8)
    elif spec.kind == "repetition":
        if llrs.size % spec.repeat:
            raise LengthMismatch(
                f"repetition:{spec.repeat} input length {llrs.size} not a multiple")
        out = (llrs.reshape(-1, spec.repeat).sum(axis=1) < 0).astype(np.uint8)
    elif spec.kind == "hamming74":
        out = _hamming_decode((llrs < 0).astype(np.uint8))
    else:
        out = _conv_decode(llrs)
    if n_info is not None:
        if n_info > out.size:
            raise LengthMismatch(f"cannot trim to {n_info} info bits, decoded {out.size}")
        out = out[:n_info]
    return out


def _hamming_decode(rx: np.ndarray) -> np.ndarray:
    """Syndrome decoding, corrects any single bit error per 7-bit block."""
    if rx.size % 7:
        raise LengthMismatch(f"hamming74 input length {rx.size} not a multiple of 7")
    r = rx.reshape(-1, 7)
    h_t = np.concatenate([_HAMMING_P, np.eye(3, dtype=np.uint8)], axis=0)  # H^T
    syn = (r @ h_t) % 2
    syn_val = syn @ np.array([4, 2, 1])
    col_val = h_t @ np.array([4, 2, 1])   # column i of H, as an integer
    flip_pos = np.full(8, -1, dtype=np.int64)
    flip_pos[col_val] = np.arange(7)
    pos = flip_pos[syn_val]
    rows = np.nonzero(pos >= 0)[0]
    corrected = r.copy()
    corrected[rows, pos[rows]] ^= 1
    return corrected[:, :4].reshape(-1)


def _conv_taps(gen: int) -> np.ndarray:
    return np.array([(gen >> (_CONV_K - 1 - j)) & 1 for j in range(_CONV_K)],
                    dtype=np.uint8)


def _conv_encode(bits: np.ndarray) -> np.ndarray:
    """Rate-1/2 feedforward code, generators (0o171, 0o133), zero-terminated.

    Output interleaves the two generator streams: 2 * (n + K - 1) bits.
    """
    u = np.concatenate([bits, np.zeros(_CONV_K - 1, dtype=np.uint8)])
    y0 = np.convolve(u, _conv_taps(_CONV_GENERATORS[0]))[:u.size] % 2
    y1 = np.convolve(u, _conv_taps(_CONV_GENERATORS[1]))[:u.size] % 2
    out = np.empty(2 * u.size, dtype=np.uint8)
    out[0::2] = y0
    out[1::2] = y1
    return out


def _conv_transition_tables() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Destination-indexed trellis tables.

    With register update full = (b << 6) | s, next = full >> 1, every
    destination d has input bit b = d >> 5 and exactly two predecessors
    2*(d & 31) and 2*(d & 31) + 1. Returns (pred_a, pred_b, sign_a, sign_b)
    where sign_* are the +/-1 encodings of the two output bits on each
    branch, shape (64, 2).
    """
    d = np.arange(_N_STATES)
    b = d >> (_CONV_K - 2)
    pred_a = (d & (_N_STATES // 2 - 1)) * 2
    pred_b = pred_a + 1
    signs = []
    for pred in (pred_a, pred_b):
        full = (b << (_CONV_K - 1)) | pred
        outs = np.empty((_N_STATES, 2), dtype=np.float64)
        for gi, gen in enumerate(_CONV_GENERATORS):
            masked = full & gen
            parity = np.array([bin(int(v)).count("1") & 1 for v in masked])
            outs[:, gi] = 1.0 - 2.0 * parity
        signs.append(outs)
    return pred_a, pred_b, signs[0], signs[1]


_PRED_A, _PRED_B, _SIGN_A, _SIGN_B = _conv_transition_tables()


def _conv_decode(llrs: np.ndarray) -> np.ndarray:
    """Viterbi over 64 states, correlation metric, terminated at state 0."""
    if llrs.size % 2:
        raise LengthMismatch(f"rate-1/2 input length {llrs.size} is odd")
    n_steps = llrs.size // 2
    if n_steps < _CONV_K - 1:
        raise LengthMismatch("input shorter than the termination tail")
    pair = llrs.reshape(n_steps, 2)
    metric = np.full(_N_STATES, -np.inf)
    metric[0] = 0.0
    back = np.empty((n_steps, _N_STATES), dtype=np.uint8)
    for t in range(n_steps):
        l0, l1 = pair[t]
        cand_a = metric[_PRED_A] + 0.5 * (_SIGN_A[:, 0] * l0 + _SIGN_A[:, 1] * l1)
        cand_b = metric[_PRED_B] + 0.5 * (_SIGN_B[:, 0] * l0 + _SIGN_B[:, 1] * l1)
        take_b = cand_b > cand_a
        metric = np.where(take_b, cand_b, cand_a)
        back[t] = np.where(take_b, _PRED_B, _PRED_A)
    states = np.empty(n_steps + 1, dtype=np.int64)
    states[n_steps] = 0   # zero-terminated
    for t in range(n_steps - 1, -1, -1):
        states[t] = back[t, states[t + 1]]
    bits = (states[1:] >> (_CONV_K - 2)).astype(np.uint8)
    return bits[:n_steps - (_CONV_K - 1)]


# -------------------------------------------------------------- modulation

def modulate(bits: np.ndarray, mod: ModulationSpec) -> np.ndarray:
    """Map bits to unit-energy M-QAM symbols; zero-pads to a full symbol."""
    bits = _as_bits(bits)
    m = mod.bits_per_symbol
    n_sym = (bits.size + m - 1) // m
    grp = np.zeros((n_sym, m), dtype=np.uint8)
    grp.reshape(-1)[:bits.size] = bits
    weights = 1 << np.arange(mod.axis_bits - 1, -1, -1)
    q_label = grp[:, :mod.axis_bits] @ weights
    i_label = grp[:, mod.axis_bits:] @ weights
    amps = mod.axis_amplitudes()
    return (amps[i_label] + 1j * amps[q_label]) * mod.scale


def transmit_awgn(symbols: np.ndarray, sub: SubStream,
                  rng: np.random.Generator) -> np.ndarray:
    """y = h sqrt(p) x + n, complex AWGN with total variance noise_var."""
    x = np.asarray(symbols, dtype=np.complex128)
    sigma = np.sqrt(sub.noise_var / 2.0)
    noise = sigma * (rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size))
    return sub.gain * np.sqrt(sub.power) * x + noise


def equalize_demodulate(y: np.ndarray, sub: SubStream,
                        mod: ModulationSpec) -> tuple[np.ndarray, np.ndarray]:
    """Equalize, then per-axis max-log demapping.

    Returns (hard_bits, llrs), both length n_sym * bits_per_symbol, bit
    order matching modulate(). LLR = (min dist^2 over bit=1 points minus
    min over bit=0 points) / nu with nu = noise_var / (p |h|^2); hard bits
    are (llr < 0).
    """
    if sub.gain == 0:
        raise ValueError("equalization requires a nonzero gain")
    if sub.power > 0:
        xhat = np.asarray(y, dtype=np.complex128) / (sub.gain * np.sqrt(sub.power))
        nu = sub.noise_var / (sub.power * abs(sub.gain) ** 2)
    else:
        # zero transmit power: no signal component; demap the noise as-is so
        # decisions are independent of the data (BER 1/2 for any labeling)
        xhat = np.asarray(y, dtype=np.complex128) / sub.gain
        nu = sub.noise_var / abs(sub.gain) ** 2
    amps = mod.axis_amplitudes() * mod.scale
    bit_table = mod.axis_bit_table()          # (levels, axis_bits)
    n_sym = xhat.size
    llrs = np.empty((n_sym, mod.bits_per_symbol))
    for axis, z in enumerate((xhat.imag, xhat.real)):   # Q bits first, then I
        d2 = (z[:, None] - amps[None, :]) ** 2          # (n_sym, levels)
        for j in range(mod.axis_bits):
            mask1 = bit_table[:, j] == 1
            min0 = d2[:, ~mask1].min(axis=1)
            min1 = d2[:, mask1].min(axis=1)
            llrs[:, axis * mod.axis_bits + j] = (min1 - min0) / nu
    flat = llrs.reshape(-1)
    return (flat < 0).astype(np.uint8), flat
