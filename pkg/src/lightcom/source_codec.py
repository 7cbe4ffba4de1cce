"""Block-mean low-pass source coding and bit-plane framing.

An image is compressed by replacing each b1 x b2 block (b1 along width,
b2 along height) with its rounded mean, giving a compression rate
r = 1 / (b1 * b2). The compressed samples are then split into K bit
planes; plane k = 1 is the LSB and plane k carries importance weight
4 ** (k - 1), reflecting the squared magnitude of the bit it holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, ShapeMismatch

MAX_BIT_DEPTH = 16


def plane_weights(bit_depth: int) -> np.ndarray:
    """Importance weights gamma_k = 4**(k-1) for k = 1..bit_depth (LSB first)."""
    if not 1 <= bit_depth <= MAX_BIT_DEPTH:
        raise ValueError(f"bit_depth must be in 1..{MAX_BIT_DEPTH}, got {bit_depth}")
    return 4.0 ** np.arange(bit_depth)


def _check_samples(samples: np.ndarray, height: int, width: int, channels: int,
                   bit_depth: int) -> np.ndarray:
    samples = np.asarray(samples)
    if not np.issubdtype(samples.dtype, np.integer):
        raise TypeError(f"samples must be an integer array, got dtype {samples.dtype}")
    if samples.shape != (height, width, channels):
        raise ShapeMismatch(
            f"samples shape {samples.shape} != (height, width, channels) "
            f"{(height, width, channels)}")
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    if not 1 <= bit_depth <= MAX_BIT_DEPTH:
        raise ValueError(f"bit_depth must be in 1..{MAX_BIT_DEPTH}, got {bit_depth}")
    if samples.size:
        lo, hi = int(samples.min()), int(samples.max())
        if lo < 0 or hi > (1 << bit_depth) - 1:
            raise ValueError(
                f"sample values [{lo}, {hi}] out of range for {bit_depth}-bit data")
    return samples.astype(np.int64, copy=False)


@dataclass
class Image:
    """Integer raster image, shape (height, width, channels)."""

    width: int
    height: int
    channels: int
    bit_depth: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.samples = _check_samples(self.samples, self.height, self.width,
                                      self.channels, self.bit_depth)

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    @classmethod
    def from_array(cls, samples: np.ndarray, bit_depth: int = 8) -> "Image":
        samples = np.asarray(samples)
        if samples.ndim == 2:
            samples = samples[:, :, None]
        h, w, c = samples.shape
        return cls(width=w, height=h, channels=c, bit_depth=bit_depth, samples=samples)


@dataclass
class CompressedRep:
    """Block means of an image. width/height refer to the ORIGINAL image;
    the sample grid is ceil(width/b1) x ceil(height/b2) when padded,
    exact quotients otherwise."""

    width: int
    height: int
    channels: int
    bit_depth: int
    block_b1: int          # block extent along width
    block_b2: int          # block extent along height
    samples: np.ndarray = field(repr=False)   # (grid_h, grid_w, channels)

    def __post_init__(self) -> None:
        if self.block_b1 < 1 or self.block_b2 < 1:
            raise ValueError("block dimensions must be >= 1")
        gh = -(-self.height // self.block_b2)
        gw = -(-self.width // self.block_b1)
        self.samples = _check_samples(self.samples, gh, gw, self.channels,
                                      self.bit_depth)

    @property
    def grid_width(self) -> int:
        return self.samples.shape[1]

    @property
    def grid_height(self) -> int:
        return self.samples.shape[0]

    @property
    def rate(self) -> float:
        return 1.0 / (self.block_b1 * self.block_b2)

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1


@dataclass
class BitPlaneFrame:
    """Bit planes of a compressed representation, LSB first.

    planes has shape (bit_depth, n_samples) with n_samples enumerating the
    sample grid in raster order, channels interleaved. planes[k - 1] is
    plane k in the 1-based numbering used for importance weights.
    """

    width: int
    height: int
    channels: int
    bit_depth: int
    block_b1: int
    block_b2: int
    planes: np.ndarray = field(repr=False)    # (K, S) uint8 in {0, 1}

    def __post_init__(self) -> None:
        planes = np.asarray(self.planes)
        gh = -(-self.height // self.block_b2)
        gw = -(-self.width // self.block_b1)
        expect = (self.bit_depth, gh * gw * self.channels)
        if planes.shape != expect:
            raise ShapeMismatch(f"planes shape {planes.shape} != {expect}")
        if planes.size and (planes.min() < 0 or planes.max() > 1):
            raise ValueError("plane entries must be 0 or 1")
        self.planes = planes.astype(np.uint8, copy=False)

    @property
    def n_samples(self) -> int:
        return self.planes.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return plane_weights(self.bit_depth)


def block_mean_encode(img: Image, b1: int, b2: int, pad: bool = False) -> CompressedRep:
    """Replace each b1 x b2 block with its mean, rounded half away from zero.

    b1 must divide the width and b2 the height unless pad=True, in which
    case the image is edge-replicated up to the next multiple first. The
    original dimensions are kept on the result so reconstruction can crop.
    """
    if b1 < 1 or b2 < 1:
        raise ValueError("block dimensions must be >= 1")
    s = img.samples
    h, w = img.height, img.width
    if w % b1 or h % b2:
        if not pad:
            raise DimensionMismatch(
                f"block {b1}x{b2} does not divide image {w}x{h} (pass pad=True)")
        pw = (-w) % b1
        ph = (-h) % b2
        s = np.pad(s, ((0, ph), (0, pw), (0, 0)), mode="edge")
    gh, gw = s.shape[0] // b2, s.shape[1] // b1
    blocks = s.reshape(gh, b2, gw, b1, img.channels)
    sums = blocks.sum(axis=(1, 3), dtype=np.int64)
    n = b1 * b2
    # integer round-half-away-from-zero of sums/n (sums are nonnegative)
    means = (2 * sums + n) // (2 * n)
    return CompressedRep(width=w, height=h, channels=img.channels,
                         bit_depth=img.bit_depth, block_b1=b1, block_b2=b2,
                         samples=means)


def split_bitplanes(rep: CompressedRep) -> BitPlaneFrame:
    """Split compressed samples into bit planes, plane 1 = LSB."""
    flat = rep.samples.reshape(-1).astype(np.uint64)
    k = np.arange(rep.bit_depth, dtype=np.uint64)[:, None]
    planes = ((flat[None, :] >> k) & np.uint64(1)).astype(np.uint8)
    return BitPlaneFrame(width=rep.width, height=rep.height, channels=rep.channels,
                         bit_depth=rep.bit_depth, block_b1=rep.block_b1,
                         block_b2=rep.block_b2, planes=planes)


def merge_bitplanes(frame: BitPlaneFrame) -> CompressedRep:
    """Inverse of split_bitplanes."""
    k = np.arange(frame.bit_depth, dtype=np.int64)[:, None]
    flat = (frame.planes.astype(np.int64) << k).sum(axis=0)
    gh = -(-frame.height // frame.block_b2)
    gw = -(-frame.width // frame.block_b1)
    samples = flat.reshape(gh, gw, frame.channels)
    return CompressedRep(width=frame.width, height=frame.height,
                         channels=frame.channels, bit_depth=frame.bit_depth,
                         block_b1=frame.block_b1, block_b2=frame.block_b2,
                         samples=samples)


def rate_to_block(rate: float) -> tuple[int, int]:
    """Map a rate of form 1/(b*b) to a square block (b, b).

    Raises ValueError with the two nearest representable rates when the
    requested rate has no exact square-block realization.
    """
    if rate <= 0 or rate > 1:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    b = 1.0 / np.sqrt(rate)
    bi = int(round(b))
    if bi >= 1 and abs(b - bi) < 1e-9:
        return bi, bi
    lo = max(int(np.floor(b)), 1)
    hi = lo + 1
    raise ValueError(
        f"rate {rate} is not 1/(b*b) for integer b; nearest representable: "
        f"1/{lo * lo} = {1.0 / (lo * lo):.6g} or 1/{hi * hi} = {1.0 / (hi * hi):.6g}")
