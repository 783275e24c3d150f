import itertools
import os

import pytest

from srrdoc.document_assembler import DocumentAssembler, assemble_document, render_block, to_html
from srrdoc.errors import InvalidInputError
from srrdoc.models.page import BBox, Block, Category


def _block(block_id, category, y=0):
    return Block(block_id, BBox(0, y, 100, y + 10), category)


def test_single_text_block():
    doc = assemble_document([_block("a", Category.TEXT)], ["hello"], [0])
    assert doc.markdown == "hello\n"


def test_title_and_text_in_rank_order():
    blocks = [_block("t", Category.TITLE), _block("p", Category.TEXT, 20)]
    assert assemble_document(blocks, ["A", "b"], [0, 1]).markdown == "# A\n\nb\n"
    assert assemble_document(blocks, ["A", "b"], [1, 0]).markdown == "b\n\n# A\n"


def test_distinct_orders_give_distinct_markdown():
    blocks = [_block(str(i), Category.TEXT, 20 * i) for i in range(4)]
    contents = ["alpha", "beta", "gamma", "delta"]
    seen = {assemble_document(blocks, contents, list(p)).markdown for p in itertools.permutations(range(4))}
    assert len(seen) == 24


def test_formula_and_table_rendering():
    assert render_block(_block("f", Category.FORMULA), "x^2") == "$$\nx^2\n$$"
    table = "<table><tr><td>1</td></tr></table>"
    assert render_block(_block("t", Category.TABLE), table) == table


def test_figure_takes_linked_caption_as_alt_text():
    blocks = [_block("fig", Category.FIGURE), _block("cap", Category.CAPTION, 20)]
    doc = assemble_document(blocks, ["", "Figure 1: cats"], [0, 1], links={"cap": "fig"})
    assert doc.markdown.startswith("![Figure 1: cats](#fig)")


def test_empty_page():
    doc = assemble_document([], [], [])
    assert doc.markdown == ""
    assert doc.items == ()


def test_length_mismatch_and_bad_order_raise():
    blocks = [_block("a", Category.TEXT), _block("b", Category.TEXT, 20)]
    with pytest.raises(InvalidInputError):
        assemble_document(blocks, ["x"], [0, 1])
    with pytest.raises(InvalidInputError):
        assemble_document(blocks, ["x", "y"], [0, 0])


def test_document_keeps_blocks_in_rank_order():
    blocks = [_block("a", Category.TEXT), _block("b", Category.TEXT, 20), _block("c", Category.TEXT, 40)]
    doc = assemble_document(blocks, ["x", "y", "z"], [2, 0, 1], page_id="p1")
    assert [b.id for b in doc.blocks] == ["b", "c", "a"]
    assert doc.contents == ["y", "z", "x"]
    assert doc.content_of("a") == "x"
    assert doc.content_of("missing") is None


def test_assembler_saves_and_loads(tmp_path):
    blocks = [_block("t", Category.TITLE), _block("p", Category.TEXT, 20)]
    doc = assemble_document(blocks, ["Heading", "Body text"], [0, 1], page_id="page-1")
    assembler = DocumentAssembler(str(tmp_path / "out"))
    files = assembler.save(doc)

    assert set(files) == {"markdown", "json", "html"}
    with open(os.path.join(tmp_path, "out", files["markdown"]), encoding="utf-8") as f:
        assert f.read() == doc.markdown
    assert assembler.load("page-1") == doc


def test_to_html_renders_markdown():
    doc = assemble_document([_block("t", Category.TITLE)], ["Heading"], [0], page_id="p")
    rendered = to_html(doc)
    assert "<h1>Heading</h1>" in rendered
    assert "<title>p</title>" in rendered
