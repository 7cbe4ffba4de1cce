"""Perceptual and semantic quality metrics.

The no-reference naturalness score follows the classic natural-scene
statistics recipe: mean-subtracted contrast-normalized (MSCN) coefficients
under a 7x7 Gaussian window (sigma = 7/6), a generalized Gaussian fit to
the MSCN distribution plus asymmetric generalized Gaussian fits to four
directional paired products, extracted on sharp 96x96 patches at two
scales (36 features), scored as the Mahalanobis-type distance between the
image's sample statistics and a pristine model, clamped to [0, 100].

Semantic distance is 1 - cosine similarity between image embeddings from
a pluggable provider. The builtin provider concatenates a 64-bin
luminance histogram and a 64-bin gradient-orientation histogram
(L2-normalized, 128-dim); it is a deterministic offline proxy, not an
approximation of any learned encoder.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests
from scipy.ndimage import correlate1d
from scipy.special import gamma as gamma_fn

from . import fileio
from .errors import (BadResponse, FormatError, ImageTooSmall, ProviderUnavailable,
                     ShapeMismatch, SingularPooledCovariance, TooFewPatches,
                     ZeroNormEmbedding)
from .source_codec import Image

N_FEATURES = 36
PATCH_SIZE = 96
SHARPNESS_FRACTION = 0.75
COV_REG = 1e-6
SCORE_CLAMP = 100.0


# ------------------------------------------------------------ MSCN front end

def _gauss_window(radius: int = 3, sigma: float = 7.0 / 6.0) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


_WINDOW = _gauss_window()


def to_gray(img: Image) -> np.ndarray:
    """Luma in [0, 255] float regardless of bit depth (Rec.601 for RGB)."""
    s = img.samples.astype(np.float64) * (255.0 / img.max_value)
    if img.channels == 1:
        return s[:, :, 0]
    return 0.299 * s[:, :, 0] + 0.587 * s[:, :, 1] + 0.114 * s[:, :, 2]


def mscn_coefficients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (mscn, sigma_field), the normalized coefficients and the
    local contrast estimate used for sharpness selection."""
    def smooth(x: np.ndarray) -> np.ndarray:
        return correlate1d(correlate1d(x, _WINDOW, axis=0, mode="nearest"),
                           _WINDOW, axis=1, mode="nearest")

    mu = smooth(gray)
    sigma = np.sqrt(np.abs(smooth(gray * gray) - mu * mu))
    return (gray - mu) / (sigma + 1.0), sigma


# ----------------------------------------------------------- GGD/AGGD fits

_ALPHAS = np.arange(0.2, 10.001, 0.001)
_GGD_RATIO = (gamma_fn(1.0 / _ALPHAS) * gamma_fn(3.0 / _ALPHAS)
              / gamma_fn(2.0 / _ALPHAS) ** 2)
_AGGD_RATIO = gamma_fn(2.0 / _ALPHAS) ** 2 / (gamma_fn(1.0 / _ALPHAS)
                                              * gamma_fn(3.0 / _ALPHAS))


def fit_ggd(x: np.ndarray) -> tuple[float, float]:
    """Moment-matched generalized Gaussian: returns (shape alpha, variance)."""
    x = x.reshape(-1)
    m_abs = np.mean(np.abs(x))
    m_sq = np.mean(x * x)
    if m_abs <= 0 or m_sq <= 0:
        return float(_ALPHAS[-1]), 0.0   # degenerate flat patch
    rho = m_sq / (m_abs * m_abs)
    alpha = _ALPHAS[int(np.argmin(np.abs(rho - _GGD_RATIO)))]
    return float(alpha), float(m_sq)


def fit_aggd(x: np.ndarray) -> tuple[float, float, float, float]:
    """Moment-matched asymmetric GGD: (alpha, eta, beta_left^2, beta_right^2)."""
    x = x.reshape(-1)
    left = x[x < 0]
    right = x[x >= 0]
    beta_l = np.sqrt(np.mean(left * left)) if left.size else 0.0
    beta_r = np.sqrt(np.mean(right * right)) if right.size else 0.0
    if beta_l == 0.0 or beta_r == 0.0:
        return float(_ALPHAS[-1]), 0.0, float(beta_l ** 2), float(beta_r ** 2)
    gamma_hat = beta_l / beta_r
    r_hat = np.mean(np.abs(x)) ** 2 / np.mean(x * x)
    r_norm = r_hat * (gamma_hat ** 3 + 1.0) * (gamma_hat + 1.0) / (gamma_hat ** 2 + 1.0) ** 2
    alpha = _ALPHAS[int(np.argmin(np.abs(r_norm - _AGGD_RATIO)))]
    eta = ((beta_r - beta_l) * gamma_fn(2.0 / alpha)
           / np.sqrt(gamma_fn(1.0 / alpha) * gamma_fn(3.0 / alpha)))
    return float(alpha), float(eta), float(beta_l ** 2), float(beta_r ** 2)


def _paired_products(mscn: np.ndarray) -> tuple[np.ndarray, ...]:
    h = mscn * np.roll(mscn, -1, axis=1)
    v = mscn * np.roll(mscn, -1, axis=0)
    d1 = mscn * np.roll(mscn, (-1, -1), axis=(0, 1))
    d2 = mscn * np.roll(mscn, (-1, 1), axis=(0, 1))
    return h, v, d1, d2


def _patch_features(mscn: np.ndarray) -> np.ndarray:
    feats = list(fit_ggd(mscn))
    for prod in _paired_products(mscn):
        feats.extend(fit_aggd(prod))
    return np.array(feats)   # 2 + 4*4 = 18 per scale


def _downscale2(gray: np.ndarray) -> np.ndarray:
    h, w = gray.shape
    g = gray[:h - h % 2, :w - w % 2]
    return 0.25 * (g[0::2, 0::2] + g[1::2, 0::2] + g[0::2, 1::2] + g[1::2, 1::2])


def image_features(img: Image, patch_size: int = PATCH_SIZE) -> np.ndarray:
    """Per-patch 36-feature rows for sharp patches at two scales."""
    gray = to_gray(img)
    h, w = gray.shape
    n_h, n_w = h // patch_size, w // patch_size
    if n_h < 1 or n_w < 1:
        raise ImageTooSmall(
            f"image {w}x{h} smaller than one {patch_size}x{patch_size} patch")
    mscn1, sigma1 = mscn_coefficients(gray)
    mscn2, _ = mscn_coefficients(_downscale2(gray))
    half = patch_size // 2

    sharpness = np.empty((n_h, n_w))
    for i in range(n_h):
        for j in range(n_w):
            sharpness[i, j] = sigma1[i * patch_size:(i + 1) * patch_size,
                                     j * patch_size:(j + 1) * patch_size].mean()
    keep = sharpness >= SHARPNESS_FRACTION * sharpness.max()

    rows = []
    for i in range(n_h):
        for j in range(n_w):
            if not keep[i, j]:
                continue
            p1 = mscn1[i * patch_size:(i + 1) * patch_size,
                       j * patch_size:(j + 1) * patch_size]
            p2 = mscn2[i * half:(i + 1) * half, j * half:(j + 1) * half]
            rows.append(np.concatenate([_patch_features(p1), _patch_features(p2)]))
    return np.stack(rows)


# ------------------------------------------------------------ pristine model

@dataclass
class PristineModel:
    mu: np.ndarray
    cov: np.ndarray = field(repr=False)
    patch_size: int = PATCH_SIZE
    scales: int = 2
    corpus_id: str = ""

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        n = self.mu.size
        if self.cov.shape != (n, n):
            raise ShapeMismatch(f"cov shape {self.cov.shape} != ({n}, {n})")
        if not np.allclose(self.cov, self.cov.T, atol=1e-8):
            raise ValueError("covariance must be symmetric")


def fit_pristine_model(corpus: list[Image], patch_size: int = PATCH_SIZE,
                       corpus_id: str = "") -> PristineModel:
    """Pool sharp-patch features over a corpus of >= 5 pristine images."""
    if len(corpus) < 5:
        raise TooFewPatches(f"pristine fit needs >= 5 images, got {len(corpus)}")
    rows = np.concatenate([image_features(img, patch_size) for img in corpus])
    if rows.shape[0] < 2:
        raise TooFewPatches(f"only {rows.shape[0]} usable patches in the corpus")
    mu = rows.mean(axis=0)
    cov = np.cov(rows, rowvar=False)
    return PristineModel(mu=mu, cov=cov, patch_size=patch_size, corpus_id=corpus_id)


def _score_raw(img: Image, model: PristineModel) -> float:
    rows = image_features(img, model.patch_size)
    mu = rows.mean(axis=0)
    cov = (np.cov(rows, rowvar=False) if rows.shape[0] > 1
           else np.zeros((rows.shape[1], rows.shape[1])))
    pooled = 0.5 * (cov + model.cov)
    n = pooled.shape[0]
    pooled = pooled + (COV_REG * np.trace(pooled) / n) * np.eye(n)
    diff = mu - model.mu
    try:
        val = float(diff @ np.linalg.solve(pooled, diff))
    except np.linalg.LinAlgError as exc:
        raise SingularPooledCovariance(
            f"pooled covariance not invertible after regularization: {exc}") from None
    if not np.isfinite(val):
        raise SingularPooledCovariance("pooled covariance produced a non-finite score")
    return float(np.sqrt(max(val, 0.0)))


def niqe_score(img: Image, model: PristineModel) -> float:
    """Naturalness distance from the pristine model, clamped to [0, 100]."""
    return min(_score_raw(img, model), SCORE_CLAMP)


def niqe_report(img: Image, model: PristineModel) -> tuple[float, bool]:
    """(clamped score, clamp flag)."""
    raw = _score_raw(img, model)
    return min(raw, SCORE_CLAMP), raw > SCORE_CLAMP


# ------------------------------------------------------- model persistence

def save_pristine_model(model: PristineModel, path: str | Path) -> None:
    """Plain-text record: NIQE1 header, dimensions, corpus id, mu, row-major cov."""
    n = model.mu.size
    lines = ["NIQE1", f"{n} {model.patch_size} {model.scales}",
             f"corpus {model.corpus_id}",
             " ".join(f"{v:.17g}" for v in model.mu)]
    for row in model.cov:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_pristine_model(path: str | Path) -> PristineModel:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 4 or lines[0].strip() != "NIQE1":
        raise FormatError(f"{path}: not a NIQE1 model file")
    try:
        n, patch_size, scales = (int(v) for v in lines[1].split())
    except ValueError:
        raise FormatError(f"{path}: bad dimension line {lines[1]!r}") from None
    if not lines[2].startswith("corpus"):
        raise FormatError(f"{path}: missing corpus line")
    corpus_id = lines[2][len("corpus"):].strip()
    if len(lines) < 4 + n:
        raise FormatError(f"{path}: expected {n} covariance rows")
    try:
        mu = np.array([float(v) for v in lines[3].split()])
        cov = np.array([[float(v) for v in lines[4 + i].split()] for i in range(n)])
    except ValueError as exc:
        raise FormatError(f"{path}: bad float field: {exc}") from None
    if mu.size != n or cov.shape != (n, n):
        raise FormatError(f"{path}: dimension mismatch in payload")
    return PristineModel(mu=mu, cov=cov, patch_size=patch_size, scales=scales,
                         corpus_id=corpus_id)


# ------------------------------------------------------------- embeddings

class BuiltinHistogramProvider:
    """Deterministic 128-dim histogram embedding (see module docstring)."""

    identity = "builtin-histogram-v1"
    dimension = 128

    def embed(self, img: Image) -> np.ndarray:
        gray = to_gray(img)
        lum, _ = np.histogram(gray, bins=64, range=(0.0, 255.0 + 1e-9))
        gy, gx = np.gradient(gray)
        theta = np.arctan2(gy, gx)
        mag = np.hypot(gx, gy)
        ori, _ = np.histogram(theta, bins=64, range=(-np.pi, np.pi + 1e-9),
                              weights=mag)
        vec = np.concatenate([lum.astype(np.float64), ori])
        norm = np.linalg.norm(vec)
        if norm <= 0:
            raise ZeroNormEmbedding("histogram embedding has zero norm")
        return vec / norm


class RemoteEmbeddingProvider:
    """Embedding via the restoration service's /v1/embed endpoint."""

    def __init__(self, endpoint: str, timeout: float = 30.0) -> None:
        if not endpoint:
            raise ValueError("remote embedding requires an endpoint")
        self.endpoint = endpoint
        self.timeout = timeout
        self.identity = f"remote:{endpoint}"   # refined from responses

    def embed(self, img: Image) -> np.ndarray:
        if img.channels == 1:
            payload, fmt = fileio.pgm_bytes(img), "pgm"
        else:
            payload, fmt = fileio.png_bytes(img), "png"
        body = {"image": base64.b64encode(payload).decode("ascii"), "format": fmt}
        url = self.endpoint.rstrip("/") + "/v1/embed"
        try:
            resp = requests.post(url, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ProviderUnavailable(f"embedding service at {url}: {exc}") from None
        if resp.status_code != 200:
            raise ProviderUnavailable(f"embedding service returned {resp.status_code}")
        try:
            doc = resp.json()
            vec = np.asarray(doc["embedding"], dtype=np.float64)
            self.identity = str(doc.get("provider", self.identity))
        except Exception as exc:
            raise BadResponse(f"malformed embed response: {exc}") from None
        if vec.ndim != 1 or not np.all(np.isfinite(vec)):
            raise BadResponse("embedding must be a finite vector")
        return vec


def semantic_distance(a: Image, b: Image, provider) -> float:
    """1 - cosine similarity of the two embeddings, in [0, 2]."""
    ea, eb = provider.embed(a), provider.embed(b)
    na, nb = np.linalg.norm(ea), np.linalg.norm(eb)
    if na <= 0 or nb <= 0:
        raise ZeroNormEmbedding("cannot normalize a zero embedding")
    cos = float(np.dot(ea, eb) / (na * nb))
    return float(np.clip(1.0 - cos, 0.0, 2.0))


# -------------------------------------------------------------------- QoE

@dataclass(frozen=True)
class QoEThresholds:
    d_niqe: float = 5.0
    d_clip: float = 0.1

    def __post_init__(self) -> None:
        if self.d_niqe <= 0 or self.d_clip <= 0:
            raise ValueError("thresholds must be positive")


@dataclass
class QoEScore:
    d_niqe: float
    d_clip: float
    niqe_clamped: bool = False
    provider_id: str = ""

    def meets(self, th: QoEThresholds) -> bool:
        return self.d_niqe <= th.d_niqe and self.d_clip <= th.d_clip


def qoe_evaluate(original: Image, reconstructed: Image, model: PristineModel,
                 provider) -> QoEScore:
    """Score a reconstruction: naturalness of the result, semantic drift
    from the original."""
    if (original.width, original.height, original.channels) != (
            reconstructed.width, reconstructed.height, reconstructed.channels):
        raise ShapeMismatch("original and reconstructed dimensions differ")
    score, clamped = niqe_report(reconstructed, model)
    dist = semantic_distance(original, reconstructed, provider)
    return QoEScore(d_niqe=score, d_clip=dist, niqe_clamped=clamped,
                    provider_id=getattr(provider, "identity", ""))
