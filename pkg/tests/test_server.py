import json
import threading
from pathlib import Path

import httpx
import pytest

from rapo.llm import FixtureBackend, Gateway
from rapo.pipeline import Optimizer
from rapo.server import make_server

DATA = Path(__file__).parent / "data"


@pytest.fixture
def base_url(graph, embedder):
    opt = Optimizer(graph, embedder, Gateway(FixtureBackend.from_file(DATA / "golden_fixtures.jsonl")))
    server = make_server(opt, "127.0.0.1", 0)
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def test_healthz(base_url):
    r = httpx.get(f"{base_url}/healthz")
    assert r.status_code == 200 and r.json() == {"status": "ok"}


@pytest.mark.parametrize("body", [{"text": ""}, {"text": "   "}, {"nope": 1}, {"text": 3}])
def test_bad_requests(base_url, body):
    assert httpx.post(f"{base_url}/optimize", json=body).status_code == 400


def test_invalid_json(base_url):
    r = httpx.post(f"{base_url}/optimize", content=b"{", headers={"Content-Type": "application/json"})
    assert r.status_code == 400


def test_golden_body(base_url):
    r = httpx.post(f"{base_url}/optimize", json={"text": "a dog playing in the park", "id": "g1"})
    assert r.status_code == 200
    assert r.json() == json.loads((DATA / "golden_optimize.json").read_text())


def test_concurrent_requests_share_graph(base_url):
    results = []

    def hit():
        results.append(httpx.post(f"{base_url}/optimize", json={"text": "a dog playing in the park", "id": "g1"}).json())

    threads = [threading.Thread(target=hit) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(results) == 6 and all(r == results[0] for r in results)


def test_unknown_path(base_url):
    assert httpx.get(f"{base_url}/nope").status_code == 404
