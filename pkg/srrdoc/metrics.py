"""
Scoring primitives: normalized edit distance, table tree edit distance
(TEDS / TEDS-S), reading-order edit and Kendall tau.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import Levenshtein
import zss
from bs4 import BeautifulSoup, Tag
from scipy.stats import kendalltau

from srrdoc.errors import InvalidInputError
from srrdoc.utils.text_utils import normalize_text

logger = logging.getLogger(__name__)

CELL_TAGS = ("td", "th")
# ids are spelled as private-use characters so ids of any length cost one edit
_ID_ALPHABET_START = 0xE000


def normalized_edit_distance(a: str, b: str) -> float:
    """Levenshtein(a, b) / max(|a|, |b|); 0 when both are empty"""
    a, b = a or "", b or ""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return Levenshtein.distance(a, b) / longest


@dataclass
class TableTree:
    """Ordered labeled tree of a table; cells carry their spans and text"""
    tag: str
    colspan: int = 1
    rowspan: int = 1
    text: str = ""
    children: List["TableTree"] = field(default_factory=list)

    @property
    def is_cell(self) -> bool:
        return self.tag in CELL_TAGS

    def size(self) -> int:
        return 1 + sum(child.size() for child in self.children)

    @classmethod
    def from_html(cls, markup: str) -> "TableTree":
        """
        Parse the first <table> of an HTML fragment.

        Raises:
            InvalidInputError: if there is no table to parse
        """
        soup = BeautifulSoup(markup or "", "html.parser")
        table = soup.find("table")
        if table is None:
            raise InvalidInputError("no <table> element found")
        return cls._convert(table)

    @classmethod
    def _convert(cls, node: Tag) -> "TableTree":
        tag = node.name.lower()
        if tag in CELL_TAGS:
            return cls(
                tag=tag,
                colspan=_span(node.get("colspan")),
                rowspan=_span(node.get("rowspan")),
                text=node.get_text(),
            )
        children = [cls._convert(child) for child in node.children if isinstance(child, Tag)]
        return cls(tag=tag, children=children)


def _span(value) -> int:
    try:
        return max(1, int(value))
    except (TypeError, ValueError):
        return 1


def _rename_cost(a: TableTree, b: TableTree, structure_only: bool) -> float:
    if a.tag != b.tag:
        return 1.0
    if a.is_cell and not structure_only:
        return normalized_edit_distance(normalize_text(a.text), normalize_text(b.text))
    return 0.0


def tree_edit_distance(t1: Optional[TableTree], t2: Optional[TableTree], structure_only: bool = False) -> float:
    """
    Zhang-Shasha edit distance with unit insert/delete costs and a rename
    cost of 1 for different tags, else the normalized edit distance
    of cell texts (0 for non-cell nodes or when structure_only).

    None stands for the empty tree.
    """
    if t1 is None and t2 is None:
        return 0.0
    if t1 is None:
        return float(t2.size())
    if t2 is None:
        return float(t1.size())
    return float(
        zss.distance(
            t1,
            t2,
            get_children=lambda node: node.children,
            insert_cost=lambda node: 1.0,
            remove_cost=lambda node: 1.0,
            update_cost=lambda a, b: _rename_cost(a, b, structure_only),
        )
    )


def teds(html_pred: str, html_gt: str, structure_only: bool = False) -> float:
    """
    Tree-edit-distance similarity of two HTML tables in [0, 1].

    An unparseable or empty side counts as the empty tree, so a prediction
    that does not parse scores 0 against any table.
    """
    trees = []
    for markup in (html_pred, html_gt):
        try:
            trees.append(TableTree.from_html(markup))
        except InvalidInputError:
            trees.append(None)
    pred, gt = trees

    largest = max(pred.size() if pred else 0, gt.size() if gt else 0)
    if largest == 0:
        return 1.0
    score = 1.0 - tree_edit_distance(pred, gt, structure_only) / largest
    return min(max(score, 0.0), 1.0)


def order_edit(pred_ids: Sequence[str], gt_ids: Sequence[str]) -> float:
    """
    Normalized edit distance between two orderings of the same block ids.

    Raises:
        InvalidInputError: if the sequences are not permutations of one id set
    """
    if len(pred_ids) != len(gt_ids) or set(pred_ids) != set(gt_ids) or len(set(gt_ids)) != len(gt_ids):
        raise InvalidInputError("predicted and ground-truth orders cover different block ids")
    symbols = {block_id: chr(_ID_ALPHABET_START + k) for k, block_id in enumerate(gt_ids)}
    return normalized_edit_distance(
        "".join(symbols[i] for i in pred_ids),
        "".join(symbols[i] for i in gt_ids),
    )


def kendall_tau(pred_ranks: Sequence[int], gt_ranks: Sequence[int]) -> float:
    """Rank correlation of two rankings of the same elements; 1.0 for fewer than two"""
    if len(pred_ranks) != len(gt_ranks):
        raise InvalidInputError("rankings have different lengths")
    if len(gt_ranks) < 2:
        return 1.0
    tau = kendalltau(pred_ranks, gt_ranks)[0]
    return 0.0 if tau != tau else float(tau)
