import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from srrdoc.corpus_hygiene import link_captions
from srrdoc.models.page import Block, Line

logger = logging.getLogger(__name__)


def _nearest_above_left(block: Block, scored: Dict[int, float], blocks: Sequence[Block]) -> Optional[int]:
    """Index of the closest line-bearing block lying above the block and starting left of it"""
    best, best_distance = None, math.inf
    cx, cy = block.bbox.center
    for index in scored:
        other = blocks[index].bbox
        if other.y2 > block.bbox.y1 or other.x1 > block.bbox.x1:
            continue
        ox, oy = other.center
        distance = math.hypot(ox - cx, oy - cy)
        if distance < best_distance:
            best, best_distance = index, distance
    return best


def autolabel_block_order(blocks: Sequence[Block], lines: Sequence[Line],
                          links: Optional[Dict[str, str]] = None) -> List[int]:
    """
    Derive block reading order from line reading order.

    A block scores the mean order of the lines whose centers fall inside it
    and blocks are ranked by ascending score. Blocks without lines (figures,
    tables) go immediately before the caption linked to them, else right
    after the nearest line-bearing block above-left of them, else first.
    Remaining ties are broken by (y1, x1), then by index.

    Args:
        blocks: Blocks of one page
        lines: Text lines with their reading order
        links: Caption id -> figure/table id; computed geometrically when None

    Returns:
        ranks, where ranks[i] is the position of blocks[i]
    """
    if not blocks:
        return []

    scored: Dict[int, float] = {}
    for index, block in enumerate(blocks):
        orders = [line.order for line in lines if block.bbox.contains_point(*line.bbox.center)]
        if orders:
            scored[index] = float(np.mean(orders))

    if links is None:
        links = link_captions(blocks).links
    caption_of = {target: caption for caption, target in links.items()}
    index_of = {block.id: index for index, block in enumerate(blocks)}

    keys = []
    for index, block in enumerate(blocks):
        if index in scored:
            score, offset = scored[index], 0
        else:
            caption_index = index_of.get(caption_of.get(block.id, ""))
            anchor = _nearest_above_left(block, scored, blocks)
            if caption_index is not None and caption_index in scored:
                score, offset = scored[caption_index], -1
            elif anchor is not None:
                score, offset = scored[anchor], 1
            else:
                score, offset = -math.inf, 0
        keys.append((score, offset, block.bbox.y1, block.bbox.x1, index))

    ranked = sorted(range(len(blocks)), key=lambda i: keys[i])
    ranks = [0] * len(blocks)
    for rank, index in enumerate(ranked):
        ranks[index] = rank

    unscored = len(blocks) - len(scored)
    if unscored:
        logger.debug(f"Placed {unscored} line-free blocks by fallback rules")
    return ranks
