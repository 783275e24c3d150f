"""
Annotation hygiene applied to layout data: nested-box removal, low-information
page filtering, caption linking and diversity scoring.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, TypeVar

from shapely.geometry import box as shapely_box
from shapely.ops import unary_union

from srrdoc.errors import InvalidInputError
from srrdoc.models.corpus import CorpusRecord
from srrdoc.models.page import Block, Category, Page

logger = logging.getLogger(__name__)

NESTING_THRESHOLD = 0.95
DEFAULT_COVERAGE_THRESHOLD = 0.35

T = TypeVar("T")


def remove_nested_boxes(items: Sequence[T], threshold: float = NESTING_THRESHOLD) -> List[T]:
    """
    Drop boxes nested inside other boxes.

    For every pair whose intersection covers at least `threshold` of the
    smaller box, the smaller one is dropped (the later one on equal areas).
    Works on anything with a `bbox` attribute (blocks, detections).

    Args:
        items: Boxes to clean
        threshold: Intersection-over-smaller-area needed to call a box nested

    Returns:
        Surviving items in their original order
    """
    dropped = set()
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            a, b = items[i].bbox, items[j].bbox
            smaller = j if b.area <= a.area else i
            small_box = items[smaller].bbox
            if a.intersection_area(b) / small_box.area >= threshold:
                dropped.add(smaller)

    if dropped:
        logger.debug(f"Removed {len(dropped)} nested boxes")
    return [item for k, item in enumerate(items) if k not in dropped]


def page_coverage(page: Page) -> float:
    """Share of the page area covered by its blocks, overlaps counted once"""
    blocks = page.blocks or ()
    if not blocks:
        return 0.0
    union = unary_union([shapely_box(b.bbox.x1, b.bbox.y1, b.bbox.x2, b.bbox.y2) for b in blocks])
    return union.area / page.area


def coverage_filter(page: Page, threshold: float = DEFAULT_COVERAGE_THRESHOLD) -> bool:
    """
    Low-information filter.

    Returns:
        True to keep the page (coverage >= threshold), False to drop it
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"coverage threshold {threshold} outside [0, 1]")
    return page_coverage(page) >= threshold


@dataclass
class CaptionLinks:
    """Result of caption linking"""
    links: Dict[str, str] = field(default_factory=dict)  # caption id -> figure/table id
    unlinked: List[str] = field(default_factory=list)


def _directly_above(target: Block, caption: Block, tolerance: float) -> bool:
    overlap = min(target.bbox.x2, caption.bbox.x2) - max(target.bbox.x1, caption.bbox.x1)
    return target.bbox.y2 <= caption.bbox.y1 + tolerance and overlap > 0


def link_captions(blocks: Sequence[Block], tie_tolerance: float = 1.0) -> CaptionLinks:
    """
    Associate each caption with the figure or table it describes.

    The nearest figure/table by center distance wins; among candidates within
    `tie_tolerance` pixels of the nearest, one lying directly above the
    caption is preferred. Captions on pages without figures or tables are
    reported as unlinked.

    Args:
        blocks: Blocks of one page
        tie_tolerance: Distance slack (pixels) treated as a tie

    Returns:
        CaptionLinks
    """
    result = CaptionLinks()
    targets = [b for b in blocks if b.category in (Category.FIGURE, Category.TABLE)]

    for caption in blocks:
        if caption.category != Category.CAPTION:
            continue
        if not targets:
            result.unlinked.append(caption.id)
            continue

        cx, cy = caption.bbox.center
        scored = []
        for index, target in enumerate(targets):
            tx, ty = target.bbox.center
            scored.append((math.hypot(tx - cx, ty - cy), index, target))

        nearest = min(d for d, _, _ in scored)
        near = [s for s in scored if s[0] <= nearest + tie_tolerance]
        _, _, best = min(
            near,
            key=lambda s: (not _directly_above(s[2], caption, tie_tolerance), s[0], s[1]),
        )
        result.links[caption.id] = best.id

    if result.unlinked:
        logger.debug(f"Unlinked captions: {result.unlinked}")
    return result


def diversity_score(record: CorpusRecord) -> float:
    """Distinct element categories on the page over the size of the category set"""
    return len({b.category for b in record.blocks}) / len(Category)


def select_diverse(records: Sequence[CorpusRecord], min_score: float) -> List[CorpusRecord]:
    """Keep pages whose element-type diversity reaches `min_score`"""
    kept = [r for r in records if diversity_score(r) >= min_score]
    logger.info(f"Kept {len(kept)} of {len(records)} pages with diversity >= {min_score:.2f}")
    return kept
