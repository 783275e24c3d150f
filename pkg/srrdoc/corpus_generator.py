"""
Synthetic ground-truth pages.

Pages are raster-free annotation records: blocks with contents, text lines with
their reading order and the block reading order itself. Reading order is
column-major, top to bottom, with every caption immediately after the figure or
table it describes, and line orders are contiguous within each block so the
block order can be recovered from the lines.
"""

import html
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from lxml import etree
from tqdm import tqdm

from srrdoc.corpus_hygiene import coverage_filter, remove_nested_boxes
from srrdoc.errors import InvalidInputError
from srrdoc.models.corpus import CorpusRecord, LayoutTemplate
from srrdoc.models.page import BBox, Block, Category, Line, Page
from srrdoc.utils.text_utils import stable_seed

logger = logging.getLogger(__name__)

PAGE_WIDTH = 1000
PAGE_HEIGHT = 1400
MARGIN = 60
HEADER_Y = 24
BODY_TOP = 80
LINE_HEIGHT = 18
LINE_PITCH = 24
TITLE_HEIGHT = 28
FORMULA_HEIGHT = 32
BLOCK_GAP = (28, 44)
MAX_ATTEMPTS = 10

WORDS = (
    "document layout analysis model block region reading order page table figure "
    "caption formula structure relation recognition parsing language vision token "
    "pipeline detection element column paragraph section result method data train "
    "evaluation score accuracy speed parallel content image text line category "
    "position embedding transformer layer network sample annotation quality source "
    "report market growth energy system process design value rate level field "
    "study analysis research paper journal chapter review summary note appendix"
).split()

CODE_TOKENS = ("x", "y", "i", "n", "total", "items", "result", "value", "idx", "row")

FILL_ALPHABETS = {
    "latin": "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ",
    "digits": "0123456789",
    "cjk": "".join(chr(c) for c in range(0x4E00, 0x4F00)),
}
FILL_ALPHABETS["mixed"] = FILL_ALPHABETS["latin"] + FILL_ALPHABETS["digits"] + FILL_ALPHABETS["cjk"]

# (row, col, rowspan, colspan)
MergeSpec = Tuple[int, int, int, int]


@dataclass
class _Draft:
    category: Category
    bbox: BBox
    content: Optional[str]
    lines: List[Tuple[BBox, str]] = field(default_factory=list)
    caption_of: Optional[int] = None  # index of the draft this caption describes


def resolve_alphabet(fill_alphabet: str) -> str:
    """Named alphabet ('latin', 'digits', 'cjk', 'mixed') or a literal character set"""
    alphabet = FILL_ALPHABETS.get(fill_alphabet, fill_alphabet)
    if not alphabet:
        raise InvalidInputError("empty fill alphabet")
    return alphabet


def render_table_html(
    rows: int,
    cols: int,
    merge_spec: Sequence[MergeSpec] = (),
    fill_alphabet: str = "mixed",
    seed: int = 0,
) -> Tuple[str, List[List[Optional[str]]]]:
    """
    Render a synthetic table as HTML.

    The first row is the header (`<thead>`), the rest the body (`<tbody>`).
    Merged cells carry rowspan/colspan; a merge may not cross the header row.

    Args:
        rows: Number of grid rows
        cols: Number of grid columns
        merge_spec: Merged regions as (row, col, rowspan, colspan)
        fill_alphabet: Alphabet name or literal characters used for cell text
        seed: Seed for cell text

    Returns:
        (html, grid) where grid[r][c] is the text of the cell anchored at (r, c)
        and None for grid positions absorbed by a merge

    Raises:
        InvalidInputError: on bad dimensions or overlapping/out-of-grid merges
    """
    if rows < 1 or cols < 1:
        raise InvalidInputError(f"table needs at least one row and column, got {rows}x{cols}")
    alphabet = resolve_alphabet(fill_alphabet)
    rng = np.random.default_rng(stable_seed("table", seed))

    owner = [[None] * cols for _ in range(rows)]
    spans = {}
    for r, c, rowspan, colspan in merge_spec:
        if rowspan < 1 or colspan < 1:
            raise InvalidInputError(f"merge spans must be >= 1: {(r, c, rowspan, colspan)}")
        if r < 0 or c < 0 or r + rowspan > rows or c + colspan > cols:
            raise InvalidInputError(f"merge {(r, c, rowspan, colspan)} leaves the {rows}x{cols} grid")
        if r == 0 and rowspan > 1:
            raise InvalidInputError(f"merge {(r, c, rowspan, colspan)} crosses the header row")
        for rr in range(r, r + rowspan):
            for cc in range(c, c + colspan):
                if owner[rr][cc] is not None:
                    raise InvalidInputError(f"merge {(r, c, rowspan, colspan)} overlaps another merge")
                owner[rr][cc] = (r, c)
        spans[(r, c)] = (rowspan, colspan)

    grid: List[List[Optional[str]]] = [[None] * cols for _ in range(rows)]
    row_html = []
    for r in range(rows):
        cells = []
        for c in range(cols):
            if owner[r][c] is not None and owner[r][c] != (r, c):
                continue
            length = int(rng.integers(1, 5))
            text = "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=length))
            grid[r][c] = text
            attrs = ""
            rowspan, colspan = spans.get((r, c), (1, 1))
            if rowspan > 1:
                attrs += f' rowspan="{rowspan}"'
            if colspan > 1:
                attrs += f' colspan="{colspan}"'
            cells.append(f"<td{attrs}>{html.escape(text)}</td>")
        row_html.append("<tr>" + "".join(cells) + "</tr>")

    body = "<thead>" + row_html[0] + "</thead>"
    if rows > 1:
        body += "<tbody>" + "".join(row_html[1:]) + "</tbody>"
    return "<table>" + body + "</table>", grid


def validate_table_html(markup: str) -> bool:
    """Strict well-formedness check: parses as XML with a <table> root"""
    try:
        root = etree.fromstring(markup.encode("utf-8"))
    except etree.XMLSyntaxError:
        return False
    return root.tag == "table"


def random_merge_spec(rows: int, cols: int, rng: np.random.Generator, max_merges: int = 2) -> List[MergeSpec]:
    """Non-overlapping random merges that stay out of the header row's rowspan"""
    taken = set()
    merges = []
    for _ in range(max_merges):
        r = int(rng.integers(0, rows))
        c = int(rng.integers(0, cols))
        rowspan = 1 if r == 0 else int(rng.integers(1, min(3, rows - r) + 1))
        colspan = int(rng.integers(1, min(3, cols - c) + 1))
        if rowspan * colspan == 1:
            continue
        cells = {(rr, cc) for rr in range(r, r + rowspan) for cc in range(c, c + colspan)}
        if cells & taken:
            continue
        taken |= cells
        merges.append((r, c, rowspan, colspan))
    return merges


def synthesize_formula(rng: np.random.Generator, depth: int = 2) -> str:
    """
    Random LaTeX expression from a small grammar (fractions, scripts, sums,
    roots and binary operators) with bounded nesting depth.
    """
    atoms = ("x", "y", "z", "a", "b", "n", "k", "1", "2", "3", r"\alpha", r"\beta", r"\pi")
    if depth <= 0:
        return atoms[int(rng.integers(0, len(atoms)))]
    kind = int(rng.integers(0, 6))
    if kind == 0:
        return r"\frac{" + synthesize_formula(rng, depth - 1) + "}{" + synthesize_formula(rng, depth - 1) + "}"
    if kind == 1:
        return synthesize_formula(rng, depth - 1) + "^{" + synthesize_formula(rng, 0) + "}"
    if kind == 2:
        return r"\sum_{i=1}^{n} " + synthesize_formula(rng, depth - 1)
    if kind == 3:
        return r"\sqrt{" + synthesize_formula(rng, depth - 1) + "}"
    op = ("+", "-", r"\cdot")[int(rng.integers(0, 3))]
    return synthesize_formula(rng, depth - 1) + f" {op} " + synthesize_formula(rng, depth - 1)


class _PageBuilder:
    """Places drafts on the page and keeps them in reading order"""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.figure_count = 0
        self.table_count = 0

    def gap(self) -> int:
        return int(self.rng.integers(BLOCK_GAP[0], BLOCK_GAP[1] + 1))

    def words(self, count: int) -> str:
        return " ".join(WORDS[int(i)] for i in self.rng.integers(0, len(WORDS), size=count))

    def _lines(self, x1: float, x2: float, y: float, n_lines: int, height: int = LINE_HEIGHT,
               text_fn=None) -> List[Tuple[BBox, str]]:
        width = x2 - x1
        lines = []
        for k in range(n_lines):
            last = k == n_lines - 1 and n_lines > 1
            line_w = width * (float(self.rng.uniform(0.35, 0.95)) if last else 1.0)
            n_words = max(2, int(line_w / 60))
            text = text_fn(n_words) if text_fn else self.words(n_words)
            top = y + k * LINE_PITCH
            lines.append((BBox(x1, top, x1 + line_w, top + height), text))
        return lines

    def text(self, x1, x2, y, n_lines, category=Category.TEXT, prefix="") -> _Draft:
        lines = self._lines(x1, x2, y, n_lines)
        if prefix:
            lines[0] = (lines[0][0], prefix + lines[0][1])
        return _Draft(category, BBox.union_of([b for b, _ in lines]), " ".join(t for _, t in lines), lines)

    def code(self, x1, x2, y, n_lines) -> _Draft:
        def statement(n_words):
            lhs = CODE_TOKENS[int(self.rng.integers(0, len(CODE_TOKENS)))]
            rhs = " + ".join(CODE_TOKENS[int(i)] for i in self.rng.integers(0, len(CODE_TOKENS), size=max(1, n_words // 3)))
            return f"{lhs} = {rhs}"
        lines = self._lines(x1, x2, y, n_lines, text_fn=statement)
        return _Draft(Category.CODE, BBox.union_of([b for b, _ in lines]), "\n".join(t for _, t in lines), lines)

    def title(self, x1, x2, y) -> _Draft:
        text = self.words(int(self.rng.integers(3, 8))).title()
        box = BBox(x1, y, x1 + (x2 - x1) * float(self.rng.uniform(0.4, 0.9)), y + TITLE_HEIGHT)
        return _Draft(Category.TITLE, box, text, [(box, text)])

    def marginal(self, category: Category, y) -> _Draft:
        text = self.words(int(self.rng.integers(2, 5)))
        box = BBox(MARGIN, y, MARGIN + float(self.rng.uniform(150, 400)), y + LINE_HEIGHT)
        return _Draft(category, box, text, [(box, text)])

    def formula(self, x1, x2, y) -> _Draft:
        latex = synthesize_formula(self.rng, depth=int(self.rng.integers(1, 4)))
        width = (x2 - x1) * float(self.rng.uniform(0.35, 0.7))
        left = x1 + ((x2 - x1) - width) / 2
        box = BBox(left, y, left + width, y + FORMULA_HEIGHT)
        return _Draft(Category.FORMULA, box, latex, [(box, latex)])

    def figure(self, x1, x2, y, height) -> _Draft:
        self.figure_count += 1
        width = (x2 - x1) * float(self.rng.uniform(0.6, 1.0))
        return _Draft(Category.FIGURE, BBox(x1, y, x1 + width, y + height), None)

    def table(self, x1, x2, y, height) -> _Draft:
        self.table_count += 1
        rows, cols = int(self.rng.integers(2, 6)), int(self.rng.integers(2, 6))
        merges = random_merge_spec(rows, cols, self.rng)
        markup, _ = render_table_html(rows, cols, merges, "mixed", seed=int(self.rng.integers(0, 2**31)))
        return _Draft(Category.TABLE, BBox(x1, y, x2, y + height), markup)

    def caption(self, x1, x2, y, target_index: int, label: str, number: int) -> _Draft:
        n_lines = int(self.rng.integers(1, 3))
        draft = self.text(x1, x2, y, n_lines, category=Category.CAPTION, prefix=f"{label} {number}: ")
        draft.caption_of = target_index
        return draft


def _fill_column(builder: _PageBuilder, drafts: List[_Draft], x1: float, x2: float,
                 y: float, y_end: float, kinds: Sequence[str], weights: Sequence[float]) -> float:
    """
    Stack blocks top to bottom in [y, y_end], appending them to `drafts` in
    reading order. Returns the y after the last block.
    """
    rng = builder.rng
    probs = np.asarray(weights, dtype=float)
    probs = probs / probs.sum()
    while True:
        kind = kinds[int(rng.choice(len(kinds), p=probs))]
        if kind == "text":
            n = int(rng.integers(1, 8))
            height = n * LINE_PITCH - (LINE_PITCH - LINE_HEIGHT)
        elif kind == "code":
            n = int(rng.integers(2, 6))
            height = n * LINE_PITCH - (LINE_PITCH - LINE_HEIGHT)
        elif kind == "formula":
            height = FORMULA_HEIGHT
        elif kind in ("figure", "table"):
            height = int(rng.integers(100, 240))
            height_with_caption = height + BLOCK_GAP[1] + 2 * LINE_PITCH
            if y + height_with_caption > y_end:
                kind, n, height = "text", 1, LINE_HEIGHT
        if y + height > y_end:
            if y + LINE_HEIGHT > y_end:
                break
            kind, n, height = "text", 1, LINE_HEIGHT

        if kind == "text":
            drafts.append(builder.text(x1, x2, y, n))
        elif kind == "code":
            drafts.append(builder.code(x1, x2, y, n))
        elif kind == "formula":
            drafts.append(builder.formula(x1, x2, y))
        else:
            target = builder.figure(x1, x2, y, height) if kind == "figure" else builder.table(x1, x2, y, height)
            drafts.append(target)
            label, number = ("Figure", builder.figure_count) if kind == "figure" else ("Table", builder.table_count)
            cap_y = target.bbox.y2 + builder.gap()
            drafts.append(builder.caption(x1, x2, cap_y, len(drafts) - 1, label, number))
        y = drafts[-1].bbox.y2 + builder.gap()
    return y


def _columns(count: int, gutter: int = 40) -> List[Tuple[float, float]]:
    width = (PAGE_WIDTH - 2 * MARGIN - (count - 1) * gutter) / count
    return [(MARGIN + k * (width + gutter), MARGIN + k * (width + gutter) + width) for k in range(count)]


def _layout(template: LayoutTemplate, builder: _PageBuilder) -> List[_Draft]:
    rng = builder.rng
    drafts: List[_Draft] = []
    bottom = PAGE_HEIGHT - MARGIN
    y = BODY_TOP

    if template == LayoutTemplate.SINGLE_COLUMN:
        if rng.random() < 0.7:
            drafts.append(builder.title(MARGIN, PAGE_WIDTH - MARGIN, y))
            y = drafts[-1].bbox.y2 + builder.gap()
        _fill_column(builder, drafts, MARGIN, PAGE_WIDTH - MARGIN, y, bottom,
                     ("text", "code", "formula"), (0.8, 0.1, 0.1))

    elif template == LayoutTemplate.DOUBLE_COLUMN:
        if rng.random() < 0.7:
            drafts.append(builder.title(MARGIN, PAGE_WIDTH - MARGIN, y))
            y = drafts[-1].bbox.y2 + builder.gap()
        for x1, x2 in _columns(2):
            _fill_column(builder, drafts, x1, x2, y, bottom,
                         ("text", "formula", "figure"), (0.85, 0.1, 0.05))

    elif template == LayoutTemplate.FIGURE_WITH_CAPTION:
        drafts.append(builder.title(MARGIN, PAGE_WIDTH - MARGIN, y))
        y = drafts[-1].bbox.y2 + builder.gap()
        (lx1, lx2), (rx1, rx2) = _columns(2)
        fig_y = y + int(rng.integers(0, 400))
        fig_h = int(rng.integers(140, 280))
        side_caption = rng.random() < 0.5

        # left column: text above the figure, figure (+ caption below), text below
        above = len(drafts)
        _fill_column(builder, drafts, lx1, lx2, y, fig_y - BLOCK_GAP[0], ("text",), (1.0,))
        fig_y = drafts[-1].bbox.y2 + builder.gap() if len(drafts) > above else y
        figure = builder.figure(lx1, lx2, fig_y, fig_h)
        drafts.append(figure)
        figure_index = len(drafts) - 1
        right: List[_Draft] = []
        if side_caption:
            # caption beside the figure, in the right column
            caption = builder.caption(rx1, rx2, fig_y, figure_index, "Figure", builder.figure_count)
            drafts.append(caption)
            after = figure.bbox.y2 + builder.gap()
        else:
            caption = builder.caption(lx1, lx2, figure.bbox.y2 + builder.gap(), figure_index, "Figure",
                                      builder.figure_count)
            drafts.append(caption)
            after = caption.bbox.y2 + builder.gap()
        _fill_column(builder, drafts, lx1, lx2, after, bottom, ("text", "formula"), (0.9, 0.1))

        # right column flows after the whole left column
        if side_caption:
            if caption.bbox.y1 - BLOCK_GAP[0] - y >= LINE_HEIGHT:
                _fill_column(builder, right, rx1, rx2, y, caption.bbox.y1 - BLOCK_GAP[0], ("text",), (1.0,))
            _fill_column(builder, right, rx1, rx2, caption.bbox.y2 + builder.gap(), bottom, ("text",), (1.0,))
        else:
            _fill_column(builder, right, rx1, rx2, y, bottom, ("text", "formula"), (0.9, 0.1))
        offset = len(drafts)
        for draft in right:
            if draft.caption_of is not None:
                draft.caption_of += offset
        drafts.extend(right)

    elif template == LayoutTemplate.TABLE_REPORT:
        drafts.append(builder.title(MARGIN, PAGE_WIDTH - MARGIN, y))
        y = drafts[-1].bbox.y2 + builder.gap()
        x1, x2 = MARGIN, PAGE_WIDTH - MARGIN
        for _ in range(int(rng.integers(1, 3))):
            drafts.append(builder.text(x1, x2, y, int(rng.integers(2, 6))))
            y = drafts[-1].bbox.y2 + builder.gap()
            height = int(rng.integers(100, 220))
            if y + height + 3 * LINE_PITCH + BLOCK_GAP[1] > bottom:
                break
            drafts.append(builder.table(x1, x2, y, height))
            drafts.append(builder.caption(x1, x2, drafts[-1].bbox.y2 + builder.gap(), len(drafts) - 1,
                                          "Table", builder.table_count))
            y = drafts[-1].bbox.y2 + builder.gap()
        _fill_column(builder, drafts, x1, x2, y, bottom, ("text",), (1.0,))

    elif template == LayoutTemplate.EXAM_PAPER:
        drafts.append(builder.marginal(Category.PAGE_HEADER, HEADER_Y))
        drafts.append(builder.title(MARGIN, PAGE_WIDTH - MARGIN, y))
        y = drafts[-1].bbox.y2 + builder.gap()
        x1, x2 = MARGIN, PAGE_WIDTH - MARGIN
        question = 1
        while True:
            n = int(rng.integers(1, 4))
            if y + n * LINE_PITCH + FORMULA_HEIGHT + BLOCK_GAP[1] > bottom - 2 * LINE_PITCH:
                break
            drafts.append(builder.text(x1, x2, y, n, prefix=f"{question}. "))
            y = drafts[-1].bbox.y2 + builder.gap()
            if rng.random() < 0.6:
                drafts.append(builder.formula(x1, x2, y))
                y = drafts[-1].bbox.y2 + builder.gap()
            question += 1
        drafts.append(builder.marginal(Category.PAGE_FOOTER, PAGE_HEIGHT - MARGIN + 10))

    elif template == LayoutTemplate.NEWSPAPER_3COL:
        drafts.append(builder.marginal(Category.PAGE_HEADER, HEADER_Y))
        drafts.append(builder.title(MARGIN, PAGE_WIDTH - MARGIN, y))
        y = drafts[-1].bbox.y2 + builder.gap()
        for x1, x2 in _columns(3, gutter=30):
            _fill_column(builder, drafts, x1, x2, y, bottom - LINE_PITCH,
                         ("text", "figure"), (0.9, 0.1))
        drafts.append(builder.marginal(Category.PAGE_FOOTER, PAGE_HEIGHT - MARGIN + 10))

    return drafts


def _to_record(template: LayoutTemplate, seed: int, drafts: List[_Draft],
               rng: np.random.Generator) -> CorpusRecord:
    page_id = f"{template.value}-{seed}"
    n = len(drafts)
    listing = [int(i) for i in rng.permutation(n)]  # listing[k] = reading index of the k-th listed block
    block_ids = {reading: f"b{k}" for k, reading in enumerate(listing)}

    lines: List[Line] = []
    order = 0
    for reading, draft in enumerate(drafts):
        for box, text in draft.lines:
            lines.append(Line(bbox=box, order=order, text=text))
            order += 1

    blocks = [
        Block(id=block_ids[reading], bbox=drafts[reading].bbox, category=drafts[reading].category,
              content=drafts[reading].content)
        for reading in listing
    ]
    links = {
        block_ids[reading]: block_ids[draft.caption_of]
        for reading, draft in enumerate(drafts)
        if draft.caption_of is not None
    }
    page = Page(id=page_id, width=PAGE_WIDTH, height=PAGE_HEIGHT, blocks=blocks, lines=lines)
    return CorpusRecord(page=page, gt_order=listing, links=links, template=template)


def synthesize_page(template: LayoutTemplate, seed: int) -> CorpusRecord:
    """
    Generate one ground-truth page.

    Deterministic for (template, seed). Blocks never overlap and the page
    always passes the default coverage filter; layouts that would not are
    redrawn from the same random stream.

    Args:
        template: Layout template
        seed: Random seed

    Returns:
        CorpusRecord with blocks listed in shuffled order and the GT ranks
    """
    rng = np.random.default_rng(stable_seed(template.value, seed))
    record = None
    for attempt in range(MAX_ATTEMPTS):
        drafts = _layout(template, _PageBuilder(rng))
        record = _to_record(template, seed, drafts, rng)
        if coverage_filter(record.page) and len(remove_nested_boxes(record.blocks)) == len(record.blocks):
            return record
        logger.debug(f"Redrawing {record.page_id} (attempt {attempt + 1})")
    logger.warning(f"Page {record.page_id} kept after {MAX_ATTEMPTS} attempts without passing hygiene")
    return record


def synthesize_corpus(templates: Iterable[LayoutTemplate], count: int, seed: int = 0,
                      show_progress: bool = False) -> List[CorpusRecord]:
    """
    Generate `count` pages cycling through `templates`; page k uses seed + k.
    """
    templates = list(templates)
    if not templates:
        raise InvalidInputError("no layout templates selected")
    records = []
    for k in tqdm(range(count), desc="Synthesizing", disable=not show_progress):
        records.append(synthesize_page(templates[k % len(templates)], seed + k))
    logger.info(f"Synthesized {len(records)} pages from {len(templates)} templates")
    return records
