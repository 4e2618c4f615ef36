from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from sonopilot.knowledge_base import KnowledgeBase, load_corpora

REPO_ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = REPO_ROOT / "src" / "sonopilot" / "data"
FIXTURES_DIR = Path(__file__).resolve().parent / "fixtures"
TRANSCRIPTS_DIR = DATA_DIR / "transcripts"


@pytest.fixture(scope="session")
def kb() -> KnowledgeBase:
    return load_corpora(DATA_DIR / "apis.jsonl", DATA_DIR / "handbook.jsonl")


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def transcripts_dir() -> Path:
    return TRANSCRIPTS_DIR


class StubHandler(BaseHTTPRequestHandler):
    """Answers every POST with the canned response configured on the server."""

    def do_POST(self):  # noqa: N802 (http.server naming)
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        self.server.requests.append(json.loads(body) if body else None)  # type: ignore[attr-defined]
        status, payload = self.server.canned  # type: ignore[attr-defined]
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt, *args):  # keep test output clean
        pass


class StubServer:
    def __init__(self):
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), StubHandler)
        self._httpd.canned = (200, {})  # type: ignore[attr-defined]
        self._httpd.requests = []  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/"

    @property
    def requests(self) -> list:
        return self._httpd.requests  # type: ignore[attr-defined]

    def respond_with(self, payload: dict, status: int = 200) -> None:
        self._httpd.canned = (status, payload)  # type: ignore[attr-defined]

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()
