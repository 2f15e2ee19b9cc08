import base64

import pytest

from vlcap_sidecar.app import create_app
from vlcap_sidecar.models import ENV_MODELS, ModelRegistry, registry_from_env

from wire_contract import (
    check_healthz,
    check_image_response,
    check_text_response,
    check_unit_norm,
    load_wire_fixture,
)


def test_healthz(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200
    check_healthz(resp.json())
    assert resp.json()["models"] == ["mock"]


def test_text_fixture_passes_wire_contract(client):
    fixture = load_wire_fixture("wire_text_request.json")
    resp = client.post(fixture["endpoint"], json=fixture["request"])
    assert resp.status_code == 200
    check_text_response(fixture["request"], resp.json())


def test_image_fixture_passes_wire_contract(client):
    fixture = load_wire_fixture("wire_image_request.json")
    resp = client.post(fixture["endpoint"], json=fixture["request"])
    assert resp.status_code == 200
    check_image_response(fixture["request"], resp.json())


def test_batch_of_three_advertised_dim(client):
    resp = client.post("/v1/embed/text", json={"model": "mock", "texts": ["ا", "ب", "ج"]})
    body = resp.json()
    assert len(body["vectors"]) == 3
    health_dim = body["dim"]
    for vec in body["vectors"]:
        assert len(vec) == health_dim
        check_unit_norm(vec)


def test_identical_inputs_identical_vectors(client):
    req = {"model": "mock", "texts": ["قطة", "قطة"]}
    body = client.post("/v1/embed/text", json=req).json()
    assert body["vectors"][0] == body["vectors"][1]
    again = client.post("/v1/embed/text", json=req).json()
    assert again["vectors"] == body["vectors"]


def test_unknown_model_404_names_known(client):
    resp = client.post("/v1/embed/text", json={"model": "resnet", "texts": ["ا"]})
    assert resp.status_code == 404
    assert resp.json()["known_models"] == ["mock"]


def test_undecodable_image_422(client):
    for payload in ["not base64 at all!!", base64.b64encode(b"plain bytes").decode()]:
        resp = client.post("/v1/embed/image", json={"model": "mock", "image_b64": payload})
        assert resp.status_code == 422


def test_batch_beyond_cap_413(client):
    resp = client.post("/v1/embed/text", json={"model": "mock", "texts": ["ا"] * 65})
    assert resp.status_code == 413
    assert resp.json()["max_batch"] == 64


def test_empty_batch_422(client):
    resp = client.post("/v1/embed/text", json={"model": "mock", "texts": []})
    assert resp.status_code == 422


def test_lazy_loading(registry):
    entry = registry.get("mock")
    assert entry._encoder is None and entry.dim is None
    client = __import__("fastapi.testclient", fromlist=["TestClient"]).TestClient(create_app(registry))
    client.get("/healthz")
    assert entry._encoder is None  # healthz does not force a load
    client.post("/v1/embed/text", json={"model": "mock", "texts": ["ا"]})
    assert entry._encoder is not None and entry.dim is not None


def test_registry_from_env(monkeypatch):
    monkeypatch.setenv(ENV_MODELS, "mock_a, mock_b")
    assert registry_from_env().names == ["mock_a", "mock_b"]
    monkeypatch.delenv(ENV_MODELS)
    assert registry_from_env().names == ["mock"]


def test_registry_rejects_unknown_name():
    with pytest.raises(ValueError, match="resnet"):
        ModelRegistry(["resnet"])
    assert ModelRegistry(["mclip", "araclip", "jina_v4"]).names == ["mclip", "araclip", "jina_v4"]


def test_concurrent_requests_consistent(client):
    from concurrent.futures import ThreadPoolExecutor

    def one(i):
        return client.post("/v1/embed/text", json={"model": "mock", "texts": ["ثابت"]}).json()

    with ThreadPoolExecutor(8) as pool:
        results = list(pool.map(one, range(16)))
    first = results[0]["vectors"][0]
    assert all(r["vectors"][0] == first for r in results)


def test_primary_client_against_live_sidecar():
    """The pipeline's own HTTP client talks to a real uvicorn instance of
    this service: discovery of dim, unit-norm re-verification, and
    text/image round-trips all happen over actual sockets."""
    import threading
    import time

    import uvicorn
    from vlcap.embeddings import RemoteProvider

    app = create_app(ModelRegistry(["mock"]))
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error"))
    threading.Thread(target=server.run, daemon=True).start()
    deadline = time.monotonic() + 10
    while not server.started:
        assert time.monotonic() < deadline, "sidecar failed to start"
        time.sleep(0.01)
    try:
        port = server.servers[0].sockets[0].getsockname()[1]
        provider = RemoteProvider("mock", base_url=f"http://127.0.0.1:{port}")
        vectors = provider.embed_texts(["قطه", "كلب"])
        assert len(vectors) == 2 and provider.encoder.dim == len(vectors[0].values)
        fixture = load_wire_fixture("wire_image_request.json")
        image = base64.b64decode(fixture["request"]["image_b64"])
        assert provider.embed_image(image).values.shape == (provider.encoder.dim,)
    finally:
        server.should_exit = True
