import json
import os

import pytest

from srrdoc.corpus_store import CorpusStore, load_inputs, load_jsonl, load_pages, resolve_corpus_path, save_jsonl
from srrdoc.errors import CorpusFormatError
from srrdoc.models.corpus import CorpusRecord
from srrdoc.models.page import Page


def test_save_then_load(tmp_path, corpus):
    path = str(tmp_path / "corpus.jsonl")
    assert save_jsonl(corpus, path) == len(corpus)
    loaded = load_jsonl(path)
    assert [r.to_dict() for r in loaded] == [r.to_dict() for r in corpus]
    assert loaded == corpus


def test_line_schema(tmp_path, corpus):
    path = str(tmp_path / "corpus.jsonl")
    save_jsonl(corpus[:1], path)
    with open(path, encoding="utf-8") as f:
        data = json.loads(f.readline())
    assert {"page_id", "page", "blocks", "lines", "gt_order", "links", "template"} <= set(data)
    assert set(data["page"]) == {"w", "h"}
    assert set(data["blocks"][0]) == {"id", "bbox", "category", "content"}
    assert {"bbox", "order"} <= set(data["lines"][0])


def test_empty_corpus_is_an_empty_file(tmp_path):
    path = str(tmp_path / "empty.jsonl")
    assert save_jsonl([], path) == 0
    assert os.path.getsize(path) == 0
    assert load_jsonl(path) == []


def test_directory_paths_resolve_to_corpus_file(tmp_path, corpus):
    directory = str(tmp_path / "new_corpus")
    save_jsonl(corpus[:2], directory)
    assert os.path.isfile(os.path.join(directory, "corpus.jsonl"))
    assert resolve_corpus_path(directory) == os.path.join(directory, "corpus.jsonl")
    assert len(load_jsonl(directory)) == 2


def test_corrupt_line_is_named(tmp_path, corpus):
    path = str(tmp_path / "bad.jsonl")
    save_jsonl(corpus[:2], path)
    with open(path, "a", encoding="utf-8") as f:
        f.write("{not json\n")
    with pytest.raises(CorpusFormatError) as excinfo:
        load_jsonl(path)
    assert excinfo.value.line_number == 3
    assert "line 3" in str(excinfo.value)


def test_schema_violation_is_named(tmp_path, corpus):
    data = corpus[0].to_dict()
    data["gt_order"] = data["gt_order"][:-1]
    path = str(tmp_path / "bad.jsonl")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n" + json.dumps(data) + "\n")
    with pytest.raises(CorpusFormatError) as excinfo:
        load_jsonl(path)
    assert excinfo.value.line_number == 2


def test_mixed_inputs(tmp_path, corpus):
    bare = {"page_id": "scan-1", "page": {"w": 100, "h": 100}, "blocks": None, "lines": []}
    path = str(tmp_path / "inputs.jsonl")
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(corpus[0].to_dict()) + "\n")
        f.write(json.dumps(bare) + "\n")
    items = load_inputs(path)
    assert isinstance(items[0], CorpusRecord)
    assert isinstance(items[1], Page) and not items[1].has_ground_truth
    assert [p.id for p in load_pages(path)] == [corpus[0].page_id, "scan-1"]


def test_store_indexes_and_persists(tmp_path, corpus):
    path = str(tmp_path / "store.jsonl")
    store = CorpusStore(path)
    assert store.all() == []
    store.add(corpus[:3])
    assert store.get(corpus[1].page_id) == corpus[1]
    assert store.get("nope") is None
    assert [r.page_id for r in CorpusStore(path).all()] == [r.page_id for r in corpus[:3]]
