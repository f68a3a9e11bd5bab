"""Shared fixtures: corpus builders, an independent brute-force oracle, a
stub HTTP server for remote-endpoint tests, and the acceptance summary hook."""
from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from cdit.model import Components, Sentence

# --------------------------------------------------------------------------
# corpus builders


def unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    m = rng.normal(size=(n, d))
    return (m / np.linalg.norm(m, axis=1, keepdims=True)).astype(np.float32)


def make_corpus(
    rng: np.random.Generator,
    n: int,
    d: int,
    dup_fraction: float = 0.0,
    prefix: str = "s",
) -> list[Sentence]:
    """Random unit-vector corpus; ``dup_fraction`` copies rows over other rows
    so that exact distance ties exist."""
    m = unit_rows(rng, n, d)
    for _ in range(int(n * dup_fraction)):
        m[int(rng.integers(0, n))] = m[int(rng.integers(0, n))]
    return [
        Sentence(id=f"{prefix}{i:05d}", text=f"{prefix}{i}", embedding=m[i])
        for i in range(n)
    ]


def brute_force_hits(corpus, q, k, cuts=None):
    """Independent exhaustive-search oracle.

    Per-row float64 distances computed one at a time, ranked by
    (distance, id); the top-1 always survives, and later candidates whose
    pair with the top-1 is cut are dropped before taking the top k.
    """
    q64 = np.asarray(q, dtype=np.float64)
    scored = []
    for s in corpus:
        diff = s.embedding.astype(np.float64) - q64
        scored.append((float(np.dot(diff, diff)), s.id))
    scored.sort()
    if not scored:
        return ()
    out = [scored[0]]
    top1 = scored[0][1]
    for dist, sid in scored[1:]:
        if cuts is not None and cuts.contains(top1, sid):
            continue
        out.append((dist, sid))
    return tuple((sid, dist) for dist, sid in out[:k])


# --------------------------------------------------------------------------
# 2-D replay layout: two conflicting contexts 8 degrees apart plus one
# unrelated far context; three query angles that each rank A first, are
# mutually below the 0.9 determiner cosine, and never reach C in the top-2.

REPLAY_HNSW_SEED = 0
REPLAY_QUERY_DEGREES = (-25.0, 3.0, -52.0)


def circle_vec(deg: float) -> np.ndarray:
    r = math.radians(deg)
    return np.array([math.cos(r), math.sin(r)], dtype=np.float32)


@pytest.fixture
def replay_layout():
    corpus = [
        Sentence(
            id="A",
            text="he turn on the radio.",
            components=Components(sub="he", pre="turn on", obj="radio"),
            embedding=circle_vec(0.0),
        ),
        Sentence(
            id="B",
            text="he turn off the radio.",
            components=Components(sub="he", pre="turn off", obj="radio"),
            embedding=circle_vec(8.0),
        ),
        Sentence(
            id="C",
            text="she read the book.",
            components=Components(sub="she", pre="read", obj="book"),
            embedding=circle_vec(240.0),
        ),
    ]
    queries = [
        Sentence(
            id=f"q{i}",
            text=f"q{i} he turn on the radio",
            components=Components(sub="he", pre="turn on", obj="radio"),
            embedding=circle_vec(deg),
        )
        for i, deg in enumerate(REPLAY_QUERY_DEGREES)
    ]
    return corpus, queries


# --------------------------------------------------------------------------
# stub HTTP server for remote embedder / judge / generator tests


class StubServer:
    """Local HTTP server; ``respond_fn(path, payload) -> (status, body)``."""

    def __init__(self, respond_fn):
        self.respond_fn = respond_fn
        self.requests: list[tuple[str, dict]] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                outer.requests.append((self.path, payload))
                status, body = outer.respond_fn(self.path, payload)
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = HTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True
        )

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/"

    def start(self):
        self._thread.start()
        return self

    def shutdown(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_server():
    servers: list[StubServer] = []

    def start(respond_fn) -> StubServer:
        server = StubServer(respond_fn).start()
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.shutdown()


# --------------------------------------------------------------------------
# acceptance summary: one visible pass/fail line per criterion

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, ok: bool, detail: str = "") -> None:
    _ACCEPTANCE.append((name, ok, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        status = "PASS" if ok else "FAIL"
        line = f"{status} {name}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)
