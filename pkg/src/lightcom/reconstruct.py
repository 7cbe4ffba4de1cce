"""Image reconstruction from (possibly corrupted) compressed representations.

Built-in kinds upscale deterministically: nearest replicates each block
mean over its block; bilinear and bicubic interpolate between block
centers, which sit at ((i + 0.5) b1 - 0.5, (j + 0.5) b2 - 0.5) in source
pixel coordinates, edge-clamped. The remote kind posts the representation
to a restoration service and never falls back silently.
"""

from __future__ import annotations

import base64
import threading
import uuid
from dataclasses import dataclass

import numpy as np
import requests
from scipy import ndimage

from . import fileio
from .errors import BadResponse, FormatError, ServiceUnavailable, Timeout
from .source_codec import CompressedRep, Image

BUILTIN_KINDS = ("nearest", "bilinear", "bicubic")


@dataclass(frozen=True)
class Reconstructor:
    """Reconstruction back end selector.

    kind: "nearest", "bilinear", "bicubic" or "remote". endpoint is the
    service base URL (client appends /v1/restore); prompt optionally
    steers generative back ends; max_inflight bounds concurrent requests.
    """

    kind: str = "bilinear"
    endpoint: str = ""
    timeout: float = 30.0
    prompt: str | None = None
    max_inflight: int = 4

    def __post_init__(self) -> None:
        if self.kind not in BUILTIN_KINDS + ("remote",):
            raise ValueError(f"unknown reconstructor kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote reconstruction requires an endpoint")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


def _interp(rep: CompressedRep, order: int) -> np.ndarray:
    b1, b2 = rep.block_b1, rep.block_b2
    out_h, out_w = rep.grid_height * b2, rep.grid_width * b1
    # source-grid coordinates of every output pixel center
    rows = ((np.arange(out_h) + 0.5) / b2 - 0.5)
    cols = ((np.arange(out_w) + 0.5) / b1 - 0.5)
    grid = np.meshgrid(rows, cols, indexing="ij")
    out = np.empty((out_h, out_w, rep.channels))
    for c in range(rep.channels):
        out[:, :, c] = ndimage.map_coordinates(
            rep.samples[:, :, c].astype(np.float64), grid, order=order,
            mode="nearest")
    return out


def reconstruct(rep: CompressedRep, rec: Reconstructor) -> Image:
    """Upscale a compressed representation back to original dimensions."""
    if rec.kind == "remote":
        return _remote_restore(rep, rec)
    b1, b2 = rep.block_b1, rep.block_b2
    if rec.kind == "nearest":
        full = np.repeat(np.repeat(rep.samples, b2, axis=0), b1, axis=1)
    else:
        order = 1 if rec.kind == "bilinear" else 3
        full = _round_half_away(_interp(rep, order))
    full = np.clip(full, 0, rep.max_value)
    cropped = full[:rep.height, :rep.width, :]   # drop padding, if any
    return Image(width=rep.width, height=rep.height, channels=rep.channels,
                 bit_depth=rep.bit_depth, samples=cropped.astype(np.int64))


# ----------------------------------------------------------------- remote

class _Gate:
    """Per-endpoint semaphore bounding in-flight requests."""

    _lock = threading.Lock()
    _gates: dict[tuple[str, int], threading.Semaphore] = {}

    @classmethod
    def acquire_for(cls, endpoint: str, limit: int) -> threading.Semaphore:
        with cls._lock:
            key = (endpoint, limit)
            if key not in cls._gates:
                cls._gates[key] = threading.Semaphore(limit)
            return cls._gates[key]


def _rep_payload(rep: CompressedRep) -> tuple[str, str]:
    if rep.bit_depth != 8:
        raise FormatError("remote restoration carries 8-bit payloads only")
    img = Image(width=rep.grid_width, height=rep.grid_height,
                channels=rep.channels, bit_depth=8, samples=rep.samples)
    if rep.channels == 1:
        return base64.b64encode(fileio.pgm_bytes(img)).decode("ascii"), "pgm"
    return base64.b64encode(fileio.png_bytes(img)).decode("ascii"), "png"


def _remote_restore(rep: CompressedRep, rec: Reconstructor) -> Image:
    payload, fmt = _rep_payload(rep)
    body = {
        "image": payload,
        "format": fmt,
        "b1": rep.block_b1,
        "b2": rep.block_b2,
        "request_id": uuid.uuid4().hex,
    }
    if rec.prompt is not None:
        body["prompt"] = rec.prompt
    url = rec.endpoint.rstrip("/") + "/v1/restore"
    gate = _Gate.acquire_for(rec.endpoint, rec.max_inflight)
    with gate:
        try:
            resp = requests.post(url, json=body, timeout=rec.timeout)
        except requests.Timeout as exc:
            raise Timeout(f"restore request to {url} timed out: {exc}") from None
        except requests.RequestException as exc:
            raise ServiceUnavailable(f"restore service at {url} unreachable: {exc}") from None
    if resp.status_code == 503:
        raise ServiceUnavailable(f"restore service at {url} returned 503")
    if resp.status_code != 200:
        raise BadResponse(f"restore service returned {resp.status_code}: {resp.text[:200]}")
    try:
        doc = resp.json()
        img_b64, img_fmt = doc["image"], doc.get("format", fmt)
        raw = base64.b64decode(img_b64, validate=True)
    except Exception as exc:
        raise BadResponse(f"malformed restore response: {exc}") from None
    try:
        restored = (fileio.parse_pgm(raw) if img_fmt == "pgm" else fileio.parse_png(raw))
    except FormatError as exc:
        raise BadResponse(str(exc)) from None
    want_w = rep.grid_width * rep.block_b1
    want_h = rep.grid_height * rep.block_b2
    if (restored.width, restored.height) != (want_w, want_h):
        raise BadResponse(
            f"restored dimensions {restored.width}x{restored.height} != "
            f"{want_w}x{want_h} required by factors ({rep.block_b1}, {rep.block_b2})")
    if restored.channels != rep.channels:
        raise BadResponse(
            f"restored channels {restored.channels} != {rep.channels}")
    cropped = restored.samples[:rep.height, :rep.width, :]
    return Image(width=rep.width, height=rep.height, channels=rep.channels,
                 bit_depth=8, samples=cropped)
