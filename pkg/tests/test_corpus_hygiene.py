import pytest

from srrdoc.corpus_hygiene import (
    coverage_filter,
    diversity_score,
    link_captions,
    page_coverage,
    remove_nested_boxes,
    select_diverse,
)
from srrdoc.errors import InvalidInputError
from srrdoc.models.corpus import CorpusRecord
from srrdoc.models.page import BBox, Block, Category, Page


def _b(block_id, x1, y1, x2, y2, category=Category.TEXT):
    return Block(block_id, BBox(x1, y1, x2, y2), category)


def test_disjoint_boxes_survive():
    blocks = [_b("a", 0, 0, 10, 10), _b("b", 20, 20, 30, 30)]
    assert remove_nested_boxes(blocks) == blocks


def test_inner_box_dropped():
    outer, inner = _b("outer", 0, 0, 100, 100), _b("inner", 10, 10, 20, 20)
    assert remove_nested_boxes([inner, outer]) == [outer]


def test_half_overlap_keeps_both():
    blocks = [_b("a", 0, 0, 10, 10), _b("b", 5, 0, 15, 10)]
    assert remove_nested_boxes(blocks) == blocks


def test_equal_boxes_keep_the_first():
    blocks = [_b("a", 0, 0, 10, 10), _b("b", 0, 0, 10, 10)]
    assert [b.id for b in remove_nested_boxes(blocks)] == ["a"]


def test_coverage():
    assert page_coverage(Page("e", 100, 100, blocks=[])) == 0.0
    assert not coverage_filter(Page("e", 100, 100, blocks=[]))
    assert coverage_filter(Page("f", 100, 100, blocks=[_b("a", 0, 0, 100, 100)]))
    thirty = Page("t", 100, 100, blocks=[_b("a", 0, 0, 100, 30)])
    assert page_coverage(thirty) == pytest.approx(0.3)
    assert not coverage_filter(thirty, 0.35)


def test_coverage_counts_overlap_once():
    page = Page("o", 100, 100, blocks=[_b("a", 0, 0, 60, 100), _b("b", 40, 0, 100, 100)])
    assert page_coverage(page) == pytest.approx(1.0)


def test_coverage_threshold_range():
    with pytest.raises(InvalidInputError):
        coverage_filter(Page("e", 100, 100, blocks=[]), 1.5)


def test_caption_below_figure():
    blocks = [_b("fig", 0, 0, 100, 100, Category.FIGURE), _b("cap", 0, 110, 100, 120, Category.CAPTION)]
    result = link_captions(blocks)
    assert result.links == {"cap": "fig"}
    assert result.unlinked == []


def test_equidistant_caption_prefers_target_above():
    blocks = [
        _b("tab", 0, 130, 100, 230, Category.TABLE),
        _b("cap", 0, 110, 100, 120, Category.CAPTION),
        _b("fig", 0, 0, 100, 100, Category.FIGURE),
    ]
    assert link_captions(blocks).links == {"cap": "fig"}


def test_caption_without_targets_is_unlinked():
    blocks = [_b("p", 0, 0, 100, 50), _b("cap", 0, 60, 100, 70, Category.CAPTION)]
    result = link_captions(blocks)
    assert result.links == {}
    assert result.unlinked == ["cap"]


def test_generated_links_agree_with_geometry(figure_record):
    assert link_captions(figure_record.blocks).links == figure_record.links


def test_diversity(corpus):
    record = corpus[0]
    assert 0 < diversity_score(record) <= 1
    page = Page("one", 100, 100, blocks=[_b("a", 0, 0, 100, 100)])
    single = CorpusRecord(page=page, gt_order=[0])
    assert diversity_score(single) == pytest.approx(1 / len(Category))
    assert select_diverse([single], 0.5) == []
    assert select_diverse([single], 0.0) == [single]
