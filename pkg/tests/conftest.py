import json
import threading
import time
from pathlib import Path

import pytest
import uvicorn

from ragline.embeddings import HashedBagOfWordsProvider
from ragline.ingest import Chunk
from ragline.mockllm import MockLLMServer


class LiveServer:
    """Run an ASGI app on a real ephemeral port for streaming-concurrency tests."""

    def __init__(self, app):
        self._server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning"))
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    def __enter__(self) -> str:
        self._thread.start()
        deadline = time.monotonic() + 10
        while not self._server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        port = self._server.servers[0].sockets[0].getsockname()[1]
        return f"http://127.0.0.1:{port}"

    def __exit__(self, *exc) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=10)

FIXTURE_DOCS = {
    "nurmiopas.txt": (
        "Nurmen perustaminen onnistuu parhaiten keväällä, kun maa on lämmennyt. "
        "Nurmi tarvitsee tasaisen ravinnetilan ja riittävän kosteuden. "
        "Säilörehun ensimmäinen korjuu tehdään yleensä kesäkuun alussa. "
        "Nurmen tiheyttä kannattaa seurata joka vuosi, ja paikkauskylvö tehdään aikaisin."
    ),
    "soil_basics.md": (
        "# Soil basics\n\n"
        "Soil pH controls nutrient availability. Liming raises pH on acidic fields. "
        "Good drainage prevents compaction and keeps roots healthy. "
        "Organic matter improves water retention and soil structure over many seasons."
    ),
    "vallodling.txt": (
        "Vallodling kräver god dränering och rätt artblandning. "
        "Vallen skördas två eller tre gånger per säsong beroende på väder. "
        "Klöver i vallen minskar behovet av kvävegödsel."
    ),
}

FIXTURE_LANGUAGES = {"nurmiopas.txt": "fi", "soil_basics.md": "en", "vallodling.txt": "sv"}
FIXTURE_TITLES = {"nurmiopas.txt": "Nurmiopas", "soil_basics.md": "Soil basics", "vallodling.txt": "Vallodling"}


@pytest.fixture
def local_provider():
    return HashedBagOfWordsProvider(dim=256)


@pytest.fixture
def corpus_dir(tmp_path: Path) -> Path:
    root = tmp_path / "corpus"
    root.mkdir()
    for name, text in FIXTURE_DOCS.items():
        (root / name).write_text(text, encoding="utf-8")
    return root


@pytest.fixture
def corpus_manifest(corpus_dir: Path) -> Path:
    manifest = corpus_dir / "manifest.json"
    entries = [
        {"path": name, "title": FIXTURE_TITLES[name], "language": FIXTURE_LANGUAGES[name]}
        for name in sorted(FIXTURE_DOCS)
    ]
    manifest.write_text(json.dumps(entries), encoding="utf-8")
    return manifest


@pytest.fixture
def mock_llm():
    server = MockLLMServer().start()
    yield server
    server.stop()


def make_chunk(chunk_id: str, text: str, *, doc_id: str | None = None, ordinal: int = 0, **metadata) -> Chunk:
    return Chunk(
        chunk_id=chunk_id,
        doc_id=doc_id or chunk_id.rsplit("#", 1)[0],
        ordinal=ordinal,
        text=text,
        span=(0, len(text)),
        metadata={"title": "", "source_path": "", "language": "unknown", **metadata},
    )
