import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from srrdoc.corpus_generator import synthesize_corpus, synthesize_page
from srrdoc.models.corpus import LayoutTemplate
from srrdoc.models.page import BBox, Block, Category, Line, Page
from srrdoc.models.relation import RelationModelConfig
from srrdoc.relation_trainer import TrainingConfig, examples_from_records, train_relation_model


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size acceptance checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size acceptance run, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def corpus():
    """Two pages of every layout template"""
    return synthesize_corpus(list(LayoutTemplate), 12, seed=7)


@pytest.fixture(scope="session")
def figure_record():
    return synthesize_page(LayoutTemplate.FIGURE_WITH_CAPTION, 3)


@pytest.fixture
def simple_page():
    """Title over two text paragraphs, one figure and its caption, listed out of order"""
    lines = [
        Line(BBox(50, 40, 400, 60), 0, "A Short Title"),
        Line(BBox(50, 100, 550, 118), 1, "first paragraph line one"),
        Line(BBox(50, 124, 300, 142), 2, "line two"),
        Line(BBox(50, 400, 550, 418), 3, "Figure 1: a caption"),
        Line(BBox(50, 460, 550, 478), 4, "closing paragraph"),
    ]
    blocks = [
        Block("b0", BBox(50, 460, 550, 478), Category.TEXT, "closing paragraph"),
        Block("b1", BBox(50, 40, 400, 60), Category.TITLE, "A Short Title"),
        Block("b2", BBox(50, 180, 550, 380), Category.FIGURE, None),
        Block("b3", BBox(50, 100, 550, 142), Category.TEXT, "first paragraph line one line two"),
        Block("b4", BBox(50, 400, 550, 418), Category.CAPTION, "Figure 1: a caption"),
    ]
    return Page(id="simple", width=600, height=800, blocks=blocks, lines=lines)


@pytest.fixture
def tiny_config():
    return RelationModelConfig(coord_embed_dim=4, layers=2, heads=2, max_elements=64, dropout=0.0)


@pytest.fixture(scope="session")
def trained_model():
    """A small model trained briefly on a double-column corpus; enough to beat chance"""
    records = synthesize_corpus([LayoutTemplate.SINGLE_COLUMN, LayoutTemplate.DOUBLE_COLUMN], 40, seed=11)
    config = RelationModelConfig(coord_embed_dim=8, layers=4, heads=2, max_elements=64, dropout=0.0)
    training = TrainingConfig(learning_rate=3e-3, epochs=15, batch_size=8, seed=0)
    result = train_relation_model(examples_from_records(records, config.max_elements), config, training)
    return result.model


class Truncated(bytes):
    """A response body the stub cuts short: it announces more bytes than it sends"""


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        server = self.server
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        with server.lock:
            server.requests.append({"path": self.path, "headers": dict(self.headers), "body": body})
            status, payload = server.responses.pop(0) if server.responses else server.default

        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
        announced = len(data) + 100 if isinstance(payload, Truncated) else len(data)
        self.send_response(status)
        if status in (307, 308):
            self.send_header("Location", self.path)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(announced))
        if announced != len(data):
            self.send_header("Connection", "close")
            self.close_connection = True
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, format, *args):
        pass


def completion(content: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": content}}]}


@pytest.fixture
def stub_server():
    """
    Local chat-completions endpoint. Queue (status, payload) pairs on
    `server.responses`; when empty it answers `server.default`. Wrap a body in
    `server.truncated(...)` to cut the response short.
    """
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.lock = threading.Lock()
    server.requests = []
    server.responses = []
    server.default = (200, completion("recognized text"))
    server.truncated = Truncated
    server.url = f"http://127.0.0.1:{server.server_address[1]}/v1"
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()
