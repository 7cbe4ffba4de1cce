"""Naturalness scoring and semantic distance.

The corpus fixtures live in conftest: session-scoped model fit over ten
structured synthetic images.
"""

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from scipy import ndimage

from lightcom.errors import (
    BadResponse, ImageTooSmall, ProviderUnavailable, ShapeMismatch,
    TooFewPatches, ZeroNormEmbedding,
)
from lightcom.qoe import (
    N_FEATURES, BuiltinHistogramProvider, PristineModel,
    RemoteEmbeddingProvider, QoEScore, QoEThresholds, fit_aggd, fit_ggd,
    fit_pristine_model, image_features, load_pristine_model,
    mscn_coefficients, niqe_report, niqe_score, qoe_evaluate,
    save_pristine_model, semantic_distance, to_gray,
)
from lightcom.source_codec import Image

from conftest import blur_image, random_image, synth_image


def test_to_gray_pinned_weights():
    rgb = Image.from_array(np.array([[[255, 0, 0]]], dtype=np.int64))
    assert to_gray(rgb)[0, 0] == pytest.approx(0.299 * 255)
    gray = random_image(0, 4, 4)
    assert np.array_equal(to_gray(gray), gray.samples[:, :, 0].astype(float))
    deep = Image.from_array(np.array([[4095]], dtype=np.int64), bit_depth=12)
    assert to_gray(deep)[0, 0] == pytest.approx(255.0)


def test_mscn_constant_image_is_zero():
    mscn, sigma = mscn_coefficients(np.full((32, 32), 80.0))
    assert np.allclose(mscn, 0.0)
    # sigma carries sqrt of a cancellation residue, not exact zero
    assert np.all(sigma < 1e-4)


def test_mscn_matches_independent_reference():
    # same definition, different machinery: explicit 2-D kernel built from
    # the Gaussian formula, sigma = 7/6, radius 3
    rng = np.random.default_rng(3)
    gray = rng.uniform(0, 255, (40, 40))
    taps = np.exp(-np.arange(-3, 4) ** 2 / (2 * (7 / 6) ** 2))
    taps /= taps.sum()
    kern = np.outer(taps, taps)
    mu = ndimage.correlate(gray, kern, mode="nearest")
    var = ndimage.correlate(gray * gray, kern, mode="nearest") - mu * mu
    sigma = np.sqrt(np.maximum(var, 0.0))
    want = (gray - mu) / (sigma + 1.0)
    got, got_sigma = mscn_coefficients(gray)
    assert np.allclose(got, want, atol=1e-10)
    assert np.allclose(got_sigma, sigma, atol=1e-10)


def test_ggd_shape_recovery():
    rng = np.random.default_rng(0)
    alpha, _ = fit_ggd(rng.normal(0, 2.0, 200_000))
    assert alpha == pytest.approx(2.0, abs=0.1)
    alpha, _ = fit_ggd(rng.laplace(0, 1.5, 200_000))
    assert alpha == pytest.approx(1.0, abs=0.1)


def test_aggd_symmetry_and_skew():
    rng = np.random.default_rng(1)
    sym = rng.normal(0, 1.0, 200_000)
    alpha, eta, bl2, br2 = fit_aggd(sym)
    assert alpha == pytest.approx(2.0, abs=0.1)
    assert eta == pytest.approx(0.0, abs=0.02)
    assert bl2 == pytest.approx(br2, rel=0.05)
    # right side drawn wider: eta positive, right scale larger
    skew = np.where(rng.uniform(size=200_000) < 0.5,
                    -np.abs(rng.normal(0, 0.5, 200_000)),
                    np.abs(rng.normal(0, 2.0, 200_000)))
    _, eta, bl2, br2 = fit_aggd(skew)
    assert eta > 0.05
    assert br2 > bl2


def test_image_features_shape():
    feats = image_features(synth_image(40, 256))
    assert feats.ndim == 2
    assert feats.shape[1] == N_FEATURES
    assert feats.shape[0] >= 1     # at least one sharp patch survives
    assert np.all(np.isfinite(feats))


def test_image_features_rejects_tiny_images():
    with pytest.raises(ImageTooSmall):
        image_features(random_image(0, 64, 64))


def test_fit_requires_five_images(pristine_corpus):
    with pytest.raises(TooFewPatches):
        fit_pristine_model(pristine_corpus[:4])


def test_model_fields(pristine_model):
    assert pristine_model.mu.shape == (N_FEATURES,)
    assert pristine_model.cov.shape == (N_FEATURES, N_FEATURES)
    assert np.allclose(pristine_model.cov, pristine_model.cov.T)
    assert pristine_model.corpus_id == "test-corpus-v1"
    assert pristine_model.patch_size == 96


def test_fit_is_deterministic(pristine_corpus, pristine_model):
    again = fit_pristine_model(pristine_corpus, corpus_id="test-corpus-v1")
    assert np.array_equal(again.mu, pristine_model.mu)
    assert np.array_equal(again.cov, pristine_model.cov)


def test_model_round_trip_preserves_scores(tmp_path, pristine_model):
    p = tmp_path / "m.niqe"
    save_pristine_model(pristine_model, p)
    assert p.read_text().startswith("NIQE1")
    back = load_pristine_model(p)
    img = synth_image(77)
    assert niqe_score(img, back) == niqe_score(img, pristine_model)
    assert back.corpus_id == pristine_model.corpus_id


def test_blur_raises_score(pristine_model):
    img = synth_image(101)
    sharp = niqe_score(img, pristine_model)
    blurred = niqe_score(blur_image(img), pristine_model)
    assert blurred > sharp


def test_niqe_report_clamp_flag(pristine_model):
    score, clamped = niqe_report(synth_image(102), pristine_model)
    assert clamped == (score >= 100.0)
    assert 0.0 <= score <= 100.0


# ------------------------------------------------------------ embeddings

def test_builtin_provider_basics():
    prov = BuiltinHistogramProvider()
    vec = prov.embed(synth_image(50, 256))
    assert vec.shape == (128,)
    assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(vec, prov.embed(synth_image(50, 256)))
    assert prov.identity == "builtin-histogram-v1"


def test_semantic_distance_bounds():
    prov = BuiltinHistogramProvider()
    a = synth_image(60, 256)
    assert semantic_distance(a, a, prov) == pytest.approx(0.0, abs=1e-12)
    d = semantic_distance(a, synth_image(61, 256), prov)
    assert 0.0 <= d <= 2.0


class _FixedProvider:
    identity = "fixed"

    def __init__(self, vec):
        self.vec = np.asarray(vec, dtype=np.float64)

    def embed(self, img):
        return self.vec


def test_semantic_distance_pinned_geometry():
    a = random_image(0, 4, 4)
    assert semantic_distance(a, a, _FixedProvider([1.0, 0.0])) == 0.0
    # orthogonal and antipodal embeddings via a provider that keys off
    # nothing would collapse; use two providers through direct cosine math
    class Alternating:
        identity = "alt"

        def __init__(self):
            self.calls = 0
            self.vecs = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]

        def embed(self, img):
            v = self.vecs[self.calls % 2]
            self.calls += 1
            return v

    assert semantic_distance(a, a, Alternating()) == pytest.approx(1.0)


def test_zero_norm_embedding_rejected():
    a = random_image(1, 4, 4)
    with pytest.raises(ZeroNormEmbedding):
        semantic_distance(a, a, _FixedProvider([0.0, 0.0]))


def test_qoe_evaluate_and_thresholds(pristine_model):
    img = synth_image(103)
    rec = blur_image(img, 3)
    score = qoe_evaluate(img, rec, pristine_model, BuiltinHistogramProvider())
    assert isinstance(score, QoEScore)
    assert score.provider_id == "builtin-histogram-v1"
    assert score.d_clip >= 0.0
    assert score.meets(QoEThresholds(d_niqe=1e9, d_clip=2.0))
    assert not score.meets(QoEThresholds(d_niqe=1e-9, d_clip=2.0))
    with pytest.raises(ValueError):
        QoEThresholds(d_niqe=0.0, d_clip=0.1)


def test_qoe_evaluate_dimension_guard(pristine_model):
    a = synth_image(104)
    b = random_image(2, 100, 100)
    with pytest.raises(ShapeMismatch):
        qoe_evaluate(a, b, pristine_model, BuiltinHistogramProvider())


# ------------------------------------------------------------ remote

class _EmbedState:
    def __init__(self):
        self.mode = "ok"


def _embed_handler(state):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def do_POST(self):
            n = int(self.headers["Content-Length"])
            body = json.loads(self.rfile.read(n))
            base64.b64decode(body["image"])
            if state.mode == "http503":
                self.send_response(503)
                self.end_headers()
                return
            if state.mode == "badjson":
                payload = b"<html>err</html>"
            elif state.mode == "notfinite":
                payload = json.dumps({"embedding": [1.0, None],
                                      "dimension": 2,
                                      "provider": "bad"}).encode()
            else:
                payload = json.dumps({"embedding": [0.6, 0.8],
                                      "dimension": 2,
                                      "provider": "clip-stub-v1"}).encode()
            self.send_response(200)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

    return Handler


@pytest.fixture
def embed_stub():
    state = _EmbedState()
    server = ThreadingHTTPServer(("127.0.0.1", 0), _embed_handler(state))
    threading.Thread(target=server.serve_forever, daemon=True).start()
    state.endpoint = f"http://127.0.0.1:{server.server_port}"
    yield state
    server.shutdown()
    server.server_close()


def test_remote_embed_round_trip(embed_stub):
    prov = RemoteEmbeddingProvider(embed_stub.endpoint)
    vec = prov.embed(random_image(0, 6, 6))
    assert np.allclose(vec, [0.6, 0.8])
    assert prov.identity == "clip-stub-v1"


def test_remote_embed_503(embed_stub):
    embed_stub.mode = "http503"
    with pytest.raises(ProviderUnavailable):
        RemoteEmbeddingProvider(embed_stub.endpoint).embed(random_image(1, 6, 6))


def test_remote_embed_unreachable():
    prov = RemoteEmbeddingProvider("http://127.0.0.1:1", timeout=0.5)
    with pytest.raises(ProviderUnavailable):
        prov.embed(random_image(2, 6, 6))


def test_remote_embed_garbage(embed_stub):
    embed_stub.mode = "badjson"
    with pytest.raises(BadResponse):
        RemoteEmbeddingProvider(embed_stub.endpoint).embed(random_image(3, 6, 6))


def test_remote_embed_nonfinite(embed_stub):
    embed_stub.mode = "notfinite"
    with pytest.raises(BadResponse):
        RemoteEmbeddingProvider(embed_stub.endpoint).embed(random_image(4, 6, 6))


def test_remote_provider_requires_endpoint():
    with pytest.raises(ValueError):
        RemoteEmbeddingProvider("")
