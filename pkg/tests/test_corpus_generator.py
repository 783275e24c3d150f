import numpy as np
import pytest
from bs4 import BeautifulSoup

from srrdoc.corpus_generator import (
    FILL_ALPHABETS,
    random_merge_spec,
    render_table_html,
    synthesize_corpus,
    synthesize_formula,
    synthesize_page,
    validate_table_html,
)
from srrdoc.corpus_hygiene import coverage_filter, remove_nested_boxes
from srrdoc.errors import InvalidInputError
from srrdoc.models.corpus import LayoutTemplate
from srrdoc.models.page import Category


def _td_count(markup):
    return len(BeautifulSoup(markup, "html.parser").find_all("td"))


def test_one_cell_table():
    markup, grid = render_table_html(1, 1)
    assert markup.startswith("<table><thead><tr><td>") and markup.endswith("</td></tr></thead></table>")
    assert _td_count(markup) == 1
    assert grid[0][0]


def test_colspan_absorbs_a_cell():
    markup, grid = render_table_html(2, 2, [(1, 0, 1, 2)])
    assert _td_count(markup) == 3
    assert 'colspan="2"' in markup
    assert grid[1][1] is None


def test_td_count_matches_merge_arithmetic():
    rng = np.random.default_rng(0)
    for trial in range(50):
        rows, cols = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        merges = random_merge_spec(rows, cols, rng, max_merges=3)
        markup, grid = render_table_html(rows, cols, merges, seed=trial)
        absorbed = sum(rs * cs - 1 for _, _, rs, cs in merges)
        assert _td_count(markup) == rows * cols - absorbed
        assert sum(cell is not None for row in grid for cell in row) == rows * cols - absorbed
        assert validate_table_html(markup)


def test_bad_merges_raise():
    with pytest.raises(InvalidInputError):
        render_table_html(3, 3, [(0, 0, 2, 1)])  # crosses the header row
    with pytest.raises(InvalidInputError):
        render_table_html(3, 3, [(1, 1, 1, 3)])  # leaves the grid
    with pytest.raises(InvalidInputError):
        render_table_html(3, 3, [(1, 0, 2, 2), (2, 1, 1, 2)])  # overlap
    with pytest.raises(InvalidInputError):
        render_table_html(0, 3)


def test_cjk_fill_alphabet():
    _, grid = render_table_html(3, 3, fill_alphabet="cjk", seed=5)
    cjk = set(FILL_ALPHABETS["cjk"])
    assert all(ch in cjk for row in grid for cell in row for ch in cell)


def test_validator_rejects_malformed_markup():
    assert not validate_table_html("<table><tr><td>x</tr></table>")
    assert not validate_table_html("<div></div>")


def test_formula_depth_zero_is_an_atom():
    rng = np.random.default_rng(1)
    assert " " not in synthesize_formula(rng, depth=0)
    deep = synthesize_formula(np.random.default_rng(2), depth=3)
    assert deep.count("{") == deep.count("}")


def test_pages_are_deterministic():
    a = synthesize_page(LayoutTemplate.DOUBLE_COLUMN, 42)
    b = synthesize_page(LayoutTemplate.DOUBLE_COLUMN, 42)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != synthesize_page(LayoutTemplate.DOUBLE_COLUMN, 43).to_dict()


def test_generated_pages_pass_hygiene(corpus):
    for record in corpus:
        assert coverage_filter(record.page)
        assert len(remove_nested_boxes(record.blocks)) == len(record.blocks)


def test_single_column_reads_top_to_bottom():
    for seed in range(5):
        record = synthesize_page(LayoutTemplate.SINGLE_COLUMN, seed)
        ordered = record.blocks_in_order()
        assert [b.bbox.y1 for b in ordered] == sorted(b.bbox.y1 for b in ordered)


def test_double_column_left_column_first():
    for seed in range(5):
        record = synthesize_page(LayoutTemplate.DOUBLE_COLUMN, seed)
        body = [b for b in record.blocks_in_order() if b.category != Category.TITLE]
        middle = record.page.width / 2
        sides = [b.bbox.x1 < middle for b in body]
        # all left-column blocks come before the first right-column block
        assert sides == sorted(sides, reverse=True)


def test_caption_follows_its_figure():
    for seed in range(8):
        record = synthesize_page(LayoutTemplate.FIGURE_WITH_CAPTION, seed)
        rank = {b.id: r for r, b in zip(record.gt_order, record.blocks)}
        assert record.links
        for caption_id, figure_id in record.links.items():
            assert rank[caption_id] == rank[figure_id] + 1


def test_line_orders_are_contiguous(corpus):
    for record in corpus:
        assert sorted(line.order for line in record.page.lines) == list(range(len(record.page.lines)))


def test_blocks_are_listed_out_of_reading_order():
    records = synthesize_corpus([LayoutTemplate.NEWSPAPER_3COL], 4, seed=0)
    assert any(list(r.gt_order) != sorted(r.gt_order) for r in records)


def test_corpus_cycles_templates():
    records = synthesize_corpus([LayoutTemplate.EXAM_PAPER, LayoutTemplate.TABLE_REPORT], 4, seed=10)
    assert [r.template for r in records] == [LayoutTemplate.EXAM_PAPER, LayoutTemplate.TABLE_REPORT] * 2
    assert [r.page_id for r in records] == ["exam_paper-10", "table_report-11", "exam_paper-12", "table_report-13"]


def test_tables_in_reports_are_well_formed():
    for seed in range(4):
        record = synthesize_page(LayoutTemplate.TABLE_REPORT, seed)
        for block in record.blocks:
            if block.category == Category.TABLE:
                assert validate_table_html(block.content)


def test_unknown_template_name():
    with pytest.raises(InvalidInputError):
        LayoutTemplate.parse_list("single_column,magazine")
    assert LayoutTemplate.parse_list("all") == list(LayoutTemplate)
