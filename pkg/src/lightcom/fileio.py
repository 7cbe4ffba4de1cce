"""File formats: PGM/PNG images, LCR1 compressed representations, packed bits.

LCR1 is the on-disk form of a CompressedRep. Fixed 16-byte little-endian
header:

    offset  field
    0       magic "LCR1"
    4       original width   (u16)
    6       original height  (u16)
    8       channels         (u8)
    9      bit depth K       (u8)
    10      block b1          (u16)
    12      block b2          (u16)
    14      reserved, zero    (u16)

followed by grid_h * grid_w * channels samples in raster order, channels
interleaved, u8 when K <= 8 and little-endian u16 otherwise.
"""

from __future__ import annotations

import io
import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import FormatError
from .source_codec import CompressedRep, Image

_LCR1_HEADER = struct.Struct("<4sHHBBHHH")
_LCR1_MAGIC = b"LCR1"


# ---------------------------------------------------------------- PGM (P5)

def pgm_bytes(img: Image) -> bytes:
    """Serialize an 8-bit grayscale image as binary PGM (P5)."""
    if img.channels != 1:
        raise FormatError(f"PGM holds a single channel, image has {img.channels}")
    if img.bit_depth != 8:
        raise FormatError(f"PGM writer supports 8-bit images, got {img.bit_depth}-bit")
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.samples[:, :, 0].astype(np.uint8).tobytes()


def parse_pgm(data: bytes, origin: str = "<bytes>") -> Image:
    if not data.startswith(b"P5"):
        raise FormatError(f"{origin}: not a binary PGM (P5) stream")
    # header = magic + 3 decimal tokens; '#' starts a comment to end of line
    pos, tokens = 2, []
    while len(tokens) < 3:
        m = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)").match(data, pos)
        if m is None:
            raise FormatError(f"{origin}: truncated PGM header")
        tokens.append(int(m.group(1)))
        pos = m.end()
    w, h, maxval = tokens
    if maxval != 255:
        raise FormatError(f"{origin}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    body = np.frombuffer(data, dtype=np.uint8, count=-1, offset=pos)
    if body.size < w * h:
        raise FormatError(f"{origin}: PGM payload shorter than {w}x{h}")
    return Image(width=w, height=h, channels=1, bit_depth=8,
                 samples=body[:w * h].reshape(h, w, 1).astype(np.int64))


def write_pgm(img: Image, path: str | Path) -> None:
    Path(path).write_bytes(pgm_bytes(img))


def read_pgm(path: str | Path) -> Image:
    return parse_pgm(Path(path).read_bytes(), origin=str(path))


# ------------------------------------------------------------------- PNG

def png_bytes(img: Image) -> bytes:
    if img.bit_depth != 8:
        raise FormatError(f"PNG writer supports 8-bit images, got {img.bit_depth}-bit")
    arr = img.samples.astype(np.uint8)
    if img.channels == 1:
        pil = PILImage.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(arr, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def parse_png(data: bytes, origin: str = "<bytes>") -> Image:
    try:
        with PILImage.open(io.BytesIO(data)) as pil:
            if pil.mode not in ("L", "RGB"):
                pil = pil.convert("RGB" if ("A" in pil.mode or pil.mode == "P") else "L")
            arr = np.asarray(pil)
    except Exception as exc:
        raise FormatError(f"{origin}: not a decodable PNG stream: {exc}") from None
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    return Image(width=w, height=h, channels=c, bit_depth=8,
                 samples=arr.astype(np.int64))


def write_png(img: Image, path: str | Path) -> None:
    Path(path).write_bytes(png_bytes(img))


def read_png(path: str | Path) -> Image:
    return parse_png(Path(path).read_bytes(), origin=str(path))


def read_image(path: str | Path) -> Image:
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".png":
        return read_png(path)
    raise FormatError(f"unsupported image extension {suffix!r} (use .pgm or .png)")


def write_image(img: Image, path: str | Path) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        write_pgm(img, path)
    elif suffix == ".png":
        write_png(img, path)
    else:
        raise FormatError(f"unsupported image extension {suffix!r} (use .pgm or .png)")


# ------------------------------------------------------------------ LCR1

def write_rep(rep: CompressedRep, path: str | Path) -> None:
    if rep.width > 0xFFFF or rep.height > 0xFFFF:
        raise FormatError("LCR1 stores dimensions as u16; image too large")
    header = _LCR1_HEADER.pack(_LCR1_MAGIC, rep.width, rep.height, rep.channels,
                               rep.bit_depth, rep.block_b1, rep.block_b2, 0)
    dtype = np.uint8 if rep.bit_depth <= 8 else np.dtype("<u2")
    Path(path).write_bytes(header + rep.samples.astype(dtype).tobytes())


def read_rep(path: str | Path) -> CompressedRep:
    data = Path(path).read_bytes()
    if len(data) < _LCR1_HEADER.size:
        raise FormatError(f"{path}: shorter than the LCR1 header")
    magic, w, h, c, k, b1, b2, _ = _LCR1_HEADER.unpack_from(data)
    if magic != _LCR1_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if b1 < 1 or b2 < 1 or c not in (1, 3) or not 1 <= k <= 16:
        raise FormatError(f"{path}: invalid header fields")
    gh, gw = -(-h // b2), -(-w // b1)
    n = gh * gw * c
    dtype = np.uint8 if k <= 8 else np.dtype("<u2")
    body = np.frombuffer(data, dtype=dtype, count=-1, offset=_LCR1_HEADER.size)
    if body.size != n:
        raise FormatError(f"{path}: expected {n} samples, found {body.size}")
    return CompressedRep(width=w, height=h, channels=c, bit_depth=k,
                         block_b1=b1, block_b2=b2,
                         samples=body.reshape(gh, gw, c).astype(np.int64))


# ------------------------------------------------------------- packed bits

def pack_bits(bits: np.ndarray) -> bytes:
    """Serialize a 0/1 vector: u64 LE bit count, then LSB-first packed bytes."""
    bits = np.asarray(bits)
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("bits must be 0 or 1")
    n = bits.size
    packed = np.packbits(bits.astype(np.uint8).reshape(-1), bitorder="little")
    return struct.pack("<Q", n) + packed.tobytes()


def unpack_bits(blob: bytes) -> np.ndarray:
    if len(blob) < 8:
        raise FormatError("packed-bit blob shorter than its length field")
    (n,) = struct.unpack_from("<Q", blob)
    need = (n + 7) // 8
    if len(blob) - 8 < need:
        raise FormatError(f"packed-bit blob holds {len(blob) - 8} bytes, needs {need}")
    arr = np.frombuffer(blob, dtype=np.uint8, count=need, offset=8)
    return np.unpackbits(arr, count=n, bitorder="little")
