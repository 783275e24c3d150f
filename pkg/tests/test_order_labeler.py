from srrdoc.order_labeler import autolabel_block_order
from srrdoc.models.page import BBox, Block, Category, Line


def _line(y, order):
    return Line(BBox(10, y, 90, y + 8), order)


def test_blocks_ranked_by_mean_line_order():
    a = Block("A", BBox(0, 0, 100, 40), Category.TEXT)
    b = Block("B", BBox(0, 50, 100, 70), Category.TEXT)
    lines = [_line(52, 3), _line(5, 1), _line(20, 2)]
    assert autolabel_block_order([b, a], lines) == [1, 0]


def test_one_block_holding_every_line():
    block = Block("all", BBox(0, 0, 100, 100), Category.TEXT)
    assert autolabel_block_order([block], [_line(10, 0), _line(30, 1)]) == [0]


def test_line_free_figures_read_top_down():
    low = Block("low", BBox(0, 500, 100, 600), Category.FIGURE)
    high = Block("high", BBox(0, 100, 100, 200), Category.FIGURE)
    assert autolabel_block_order([low, high], []) == [1, 0]


def test_figure_goes_right_before_its_caption(simple_page):
    ranks = autolabel_block_order(simple_page.blocks, simple_page.lines)
    # b0 closing, b1 title, b2 figure, b3 paragraph, b4 caption
    assert ranks == [4, 0, 2, 1, 3]


def test_explicit_links_override_geometry(simple_page):
    blocks = list(simple_page.blocks)
    ranks = autolabel_block_order(blocks, simple_page.lines, links={})
    # without a caption link the figure follows the nearest block above-left: the paragraph
    assert ranks == [4, 0, 2, 1, 3]
    ranks = autolabel_block_order(blocks, simple_page.lines, links={"b0": "b2"})
    assert ranks[2] == ranks[0] - 1


def test_unanchored_block_goes_first():
    stray = Block("stray", BBox(500, 0, 600, 50), Category.TABLE)
    text = Block("text", BBox(0, 100, 100, 150), Category.TEXT)
    assert autolabel_block_order([text, stray], [_line(110, 0)]) == [1, 0]


def test_empty_page():
    assert autolabel_block_order([], []) == []


def test_agrees_with_generated_ground_truth(corpus):
    for record in corpus:
        ranks = autolabel_block_order(record.blocks, record.page.lines, record.links)
        assert tuple(ranks) == record.gt_order, record.page_id
