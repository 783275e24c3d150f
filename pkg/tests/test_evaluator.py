import json
import os

import pandas as pd
import pytest

from srrdoc.document_assembler import assemble_document
from srrdoc.evaluator import (
    aggregate_reports,
    end_to_end_report,
    evaluate_documents,
    match_blocks,
    render_report_markdown,
    score_page,
    write_report,
)
from srrdoc.models.corpus import CorpusRecord
from srrdoc.models.page import BBox, Block, Category, Page
from srrdoc.models.report import MetricReport, PageScores


def _perfect(record):
    contents = [block.content or "" for block in record.blocks]
    return assemble_document(record.blocks, contents, record.gt_order, record.links, page_id=record.page_id)


@pytest.fixture
def two_blocks():
    blocks = [
        Block("a", BBox(0, 0, 100, 40), Category.TEXT, "hello"),
        Block("b", BBox(0, 50, 100, 90), Category.TEXT, "world"),
    ]
    return CorpusRecord(page=Page("two", 100, 100, blocks=blocks), gt_order=[0, 1])


def test_perfect_parse_scores_zero_error(corpus):
    for record in corpus:
        scores = score_page(_perfect(record), record)
        assert scores.order_edit == 0.0
        assert scores.overall_edit == 0.0
        assert scores.text_edit in (None, 0.0)
        assert scores.formula_edit in (None, 0.0)
        if scores.table_teds is not None:
            assert scores.table_teds == 1.0
            assert scores.table_teds_s == 1.0


def test_reversed_order(two_blocks):
    parsed = assemble_document(two_blocks.blocks, ["hello", "world"], [1, 0], page_id="two")
    report = end_to_end_report(parsed, two_blocks)
    assert report.order_edit == 1.0
    assert report.text_edit == 0.0
    assert report.overall_edit == pytest.approx(0.5)


def test_wrong_text_counts(two_blocks):
    parsed = assemble_document(two_blocks.blocks, ["hello", "wxrld"], [0, 1], page_id="two")
    scores = score_page(parsed, two_blocks)
    assert scores.text_edit == pytest.approx(0.1)  # one of five characters, averaged over two blocks


def test_split_blocks_are_joined_in_reading_order(two_blocks):
    pieces = [
        Block("b.l0", BBox(0, 50, 50, 90), Category.TEXT),
        Block("a", BBox(0, 0, 100, 40), Category.TEXT),
        Block("b.l1", BBox(50, 50, 100, 90), Category.TEXT),
    ]
    parsed = assemble_document(pieces, ["wor", "hello", "ld"], [1, 0, 2], page_id="two")
    scores = score_page(parsed, two_blocks)
    assert scores.order_edit == 0.0
    # "wor ld" against "world": one insertion over six characters
    assert scores.text_edit == pytest.approx((0 + 1 / 6) / 2)


def test_missing_block_scores_full_error(two_blocks):
    parsed = assemble_document([two_blocks.blocks[0]], ["hello"], [0], page_id="two")
    scores = score_page(parsed, two_blocks)
    assert scores.text_edit == pytest.approx(0.5)
    assert scores.order_edit == 0.0


def test_match_blocks():
    gt = [Block("g0", BBox(0, 0, 100, 100), Category.TEXT), Block("g1", BBox(0, 100, 100, 200), Category.TEXT)]
    predicted = [
        Block("p0", BBox(10, 110, 90, 190), Category.TEXT),
        Block("p1", BBox(200, 200, 210, 210), Category.TEXT),
        Block("p2", BBox(0, 0, 100, 100), Category.TEXT),
    ]
    assert match_blocks(predicted, gt) == [1, None, 0]


def test_aggregate_averages_where_defined():
    pages = [
        PageScores("p1", "a", text_edit=0.2, table_teds=0.5, order_edit=0.0, overall_edit=0.1),
        PageScores("p2", "b", text_edit=0.4, order_edit=1.0, overall_edit=0.7),
    ]
    report = aggregate_reports(pages)
    assert report.text_edit == pytest.approx(0.3)
    assert report.table_teds == pytest.approx(0.5)
    assert report.formula_edit is None
    assert set(report.by_template) == {"a", "b"}
    assert report.by_template["a"]["pages"] == 1


def test_aggregate_overall_is_mean_of_task_means():
    pages = [
        PageScores("a", "report", text_edit=0.5, order_edit=0.0, overall_edit=0.25),
        PageScores("b", "report", text_edit=0.0, formula_edit=1.0, order_edit=0.0, overall_edit=1 / 3),
    ]
    report = aggregate_reports(pages)
    # text 0.25, formula 1.0, order 0.0
    assert report.overall_edit == pytest.approx(0.41667, abs=1e-5)
    assert report.by_template["report"]["overall_edit"] == pytest.approx(0.41667, abs=1e-5)
    assert report.by_template["report"]["text_edit"] == pytest.approx(0.25)


def test_page_scores_range_checked():
    with pytest.raises(ValueError):
        PageScores("p", text_edit=1.5)


def test_evaluate_documents_skips_unknown_pages(corpus):
    documents = [_perfect(record) for record in corpus[:3]]
    report = evaluate_documents(documents, corpus[1:3])
    assert len(report.pages) == 2
    assert report.overall_edit == 0.0


def test_write_report(tmp_path, corpus):
    documents = [_perfect(record) for record in corpus[:4]]
    report = evaluate_documents(documents, corpus)
    paths = write_report(report, str(tmp_path / "eval" / "report.json"))

    assert set(paths) == {"json", "csv", "markdown"}
    with open(paths["json"], encoding="utf-8") as f:
        data = json.load(f)
    assert data["page_count"] == 4
    assert MetricReport.from_dict(data).order_edit == report.order_edit

    frame = pd.read_csv(paths["csv"])
    assert frame["page_id"].tolist()[-1] == "ALL"
    assert len(frame) == 5
    assert os.path.getsize(paths["markdown"]) > 0


def test_markdown_lists_worst_pages(two_blocks):
    parsed = assemble_document(two_blocks.blocks, ["hello", "world"], [1, 0], page_id="two")
    markdown = render_report_markdown(end_to_end_report(parsed, two_blocks))
    assert "two" in markdown
    assert "0.5000" in markdown
