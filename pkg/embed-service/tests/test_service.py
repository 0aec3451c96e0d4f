import base64
import io
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from embed_service import StubEncoder, create_app
from embed_service.encoders import build_encoder


@pytest.fixture()
def client():
    return TestClient(create_app(encoder=StubEncoder()))


def png_b64(pixels=None, size=(224, 224), fill=(200, 30, 30)):
    if pixels is None:
        pixels = np.full(size + (3,), fill, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


# ------------------------------------------------------------------ info


def test_info_descriptor_shape(client):
    resp = client.get("/v1/info")
    assert resp.status_code == 200
    info = resp.json()
    assert set(info) == {"model_id", "dim", "input_side", "preprocessing", "version"}
    assert info["dim"] == 32
    assert info["input_side"] == 64


def test_info_is_503_while_loading():
    release = threading.Event()

    def slow_loader():
        release.wait(5)
        return StubEncoder()

    app = create_app(loader=slow_loader)
    client = TestClient(app)
    assert client.get("/v1/info").status_code == 503
    assert client.post("/v1/embed/text", json={"texts": ["x"]}).status_code == 503
    release.set()
    deadline = time.time() + 5
    while time.time() < deadline:
        if client.get("/v1/info").status_code == 200:
            break
        time.sleep(0.02)
    assert client.get("/v1/info").status_code == 200


def test_loader_failure_reported_in_503_body():
    def broken_loader():
        raise RuntimeError("weights missing")

    client = TestClient(create_app(loader=broken_loader))
    deadline = time.time() + 5
    while time.time() < deadline:
        resp = client.get("/v1/info")
        if "weights missing" in resp.text:
            break
        time.sleep(0.02)
    assert resp.status_code == 503
    assert "weights missing" in resp.text


# ------------------------------------------------------------------ text


def test_single_text_gives_one_normalized_vector(client):
    resp = client.post("/v1/embed/text", json={"texts": ["a red cube"]})
    assert resp.status_code == 200
    body = resp.json()
    assert body["normalized"] is True
    assert body["dim"] == 32
    vectors = np.asarray(body["vectors"])
    assert vectors.shape == (1, 32)
    assert abs(np.linalg.norm(vectors[0]) - 1.0) < 1e-6


def test_duplicate_texts_embed_identically(client):
    resp = client.post("/v1/embed/text", json={"texts": ["same", "same"]})
    v = resp.json()["vectors"]
    assert v[0] == v[1]


def test_identical_payload_gives_bit_identical_response(client):
    payload = {"texts": ["alpha", "beta"]}
    a = client.post("/v1/embed/text", json=payload)
    b = client.post("/v1/embed/text", json=payload)
    assert a.content == b.content


def test_empty_text_list_is_400(client):
    assert client.post("/v1/embed/text", json={"texts": []}).status_code == 400
    assert client.post("/v1/embed/text", json={}).status_code == 400
    assert client.post("/v1/embed/text", json={"texts": [""]}).status_code == 400


def test_batch_over_limit_is_413(client):
    resp = client.post("/v1/embed/text", json={"texts": ["x"] * 257})
    assert resp.status_code == 413


def test_order_preserved_across_batch(client):
    texts = [f"text-{i}" for i in range(20)]
    batch = np.asarray(client.post("/v1/embed/text", json={"texts": texts}).json()["vectors"])
    for i in (0, 7, 19):
        single = np.asarray(
            client.post("/v1/embed/text", json={"texts": [texts[i]]}).json()["vectors"]
        )[0]
        assert np.array_equal(batch[i], single)


# ----------------------------------------------------------------- image


def test_single_image_round_trip(client):
    resp = client.post("/v1/embed/image", json={"images": [png_b64()]})
    assert resp.status_code == 200
    vectors = np.asarray(resp.json()["vectors"])
    assert vectors.shape == (1, 32)
    assert abs(np.linalg.norm(vectors[0]) - 1.0) < 1e-6


def test_same_png_twice_identical_vectors(client):
    image = png_b64()
    resp = client.post("/v1/embed/image", json={"images": [image, image]})
    v = resp.json()["vectors"]
    assert v[0] == v[1]


def test_different_pixels_differ(client):
    a = png_b64(fill=(200, 30, 30))
    b = png_b64(fill=(30, 200, 30))
    v = client.post("/v1/embed/image", json={"images": [a, b]}).json()["vectors"]
    assert v[0] != v[1]


def test_undecodable_image_is_400(client):
    junk = base64.b64encode(b"definitely not a png").decode()
    resp = client.post("/v1/embed/image", json={"images": [junk]})
    assert resp.status_code == 400
    resp = client.post("/v1/embed/image", json={"images": ["!!!not-base64!!!"]})
    assert resp.status_code == 400


def test_image_batch_over_limit_is_413(client):
    image = png_b64(size=(8, 8))
    resp = client.post("/v1/embed/image", json={"images": [image] * 257})
    assert resp.status_code == 413


def test_malformed_body_is_400(client):
    resp = client.post(
        "/v1/embed/text", content=b"not json", headers={"Content-Type": "application/json"}
    )
    assert resp.status_code == 400


# ------------------------------------------------------------- encoders


def test_build_encoder_stub_specs():
    enc = build_encoder("stub:16x32")
    info = enc.info()
    assert info.dim == 16 and info.input_side == 32


def test_hf_encoder_requires_weights():
    pytest.importorskip("transformers")
    with pytest.raises(Exception):
        build_encoder("./no/such/checkpoint")


# ---------------------------------------------------- harness integration


def test_harness_remote_backend_speaks_this_wire_protocol():
    """The evaluation harness's remote client must interoperate unchanged."""
    cropmatch = pytest.importorskip("cropmatch")
    import uvicorn

    app = create_app(encoder=StubEncoder())
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started and time.time() < deadline:
        time.sleep(0.02)
    assert server.started
    port = server.servers[0].sockets[0].getsockname()[1]
    try:
        backend = cropmatch.make_backend(f"http://127.0.0.1:{port}")
        assert backend.descriptor.dim == 32
        provider = cropmatch.EmbeddingProvider(backend)
        texts = provider.embed_texts(["a red cube", "a blue sphere"])
        assert texts.shape == (2, 32)
        image = np.full((224, 224, 3), 128, dtype=np.uint8)
        images = provider.embed_images([image])
        assert images.shape == (1, 32)
        assert abs(np.linalg.norm(images[0]) - 1.0) < 1e-6
    finally:
        server.should_exit = True
        thread.join(timeout=5)
