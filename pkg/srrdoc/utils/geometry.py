import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Tuple

from srrdoc.errors import InvalidInputError
from srrdoc.models.page import BBox, Block, Line, Page

logger = logging.getLogger(__name__)

GRID_SIZE = 1000

# A block belongs to a crop when at least this share of its area is inside it
REGION_MEMBERSHIP = 0.5


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def normalize_bbox(bbox: BBox, page_w: float, page_h: float) -> BBox:
    """
    Map a pixel box onto the 0..1000 integer grid used by the relation model.

    Args:
        bbox: Box in page pixel coordinates
        page_w: Page width in pixels
        page_h: Page height in pixels

    Returns:
        Box with integer coordinates in [0, 1000]. A box thinner than one grid
        cell keeps a width/height of one cell.

    Raises:
        InvalidInputError: if the page dimensions are not positive
    """
    if not (page_w > 0 and page_h > 0) or not (math.isfinite(page_w) and math.isfinite(page_h)):
        raise InvalidInputError(f"degenerate page dimensions {page_w}x{page_h}")

    def scale(c: float, dim: float) -> int:
        return min(max(_round_half_up(c / dim * GRID_SIZE), 0), GRID_SIZE)

    x1, x2 = scale(bbox.x1, page_w), scale(bbox.x2, page_w)
    y1, y2 = scale(bbox.y1, page_h), scale(bbox.y2, page_h)
    if x2 <= x1:
        x1, x2 = (x1, x1 + 1) if x1 < GRID_SIZE else (GRID_SIZE - 1, GRID_SIZE)
    if y2 <= y1:
        y1, y2 = (y1, y1 + 1) if y1 < GRID_SIZE else (GRID_SIZE - 1, GRID_SIZE)
    return BBox(x1, y1, x2, y2)


@dataclass(frozen=True)
class Region:
    """
    A crop of a page. For rasterless pages it carries the annotation records
    restricted to the crop; `image` is set when the page has a raster.
    """
    page_id: str
    bbox: BBox
    clipped: bool = False
    blocks: Tuple[Block, ...] = ()
    lines: Tuple[Line, ...] = ()
    image: Optional[Any] = field(default=None, compare=False, repr=False)

    @property
    def width(self) -> float:
        return self.bbox.width

    @property
    def height(self) -> float:
        return self.bbox.height

    def to_page_point(self, dx: float, dy: float) -> Tuple[float, float]:
        """Translate a crop-relative point back to page coordinates"""
        return self.bbox.x1 + dx, self.bbox.y1 + dy

    @property
    def content(self) -> str:
        """
        Ground-truth text visible in the crop: the contents of blocks lying
        mostly inside it, or else the text of lines whose centers fall inside.
        """
        if self.blocks:
            return "\n\n".join(b.content for b in self.blocks if b.content)
        texts = [line.text for line in sorted(self.lines, key=lambda l: l.order) if line.text]
        return " ".join(texts)


def crop_region(page: Page, bbox: BBox) -> Region:
    """
    Cut the area under `bbox` out of a page.

    Boxes extending past the page are clipped and the region is flagged.
    """
    x2 = min(bbox.x2, page.width)
    y2 = min(bbox.y2, page.height)
    clipped = x2 != bbox.x2 or y2 != bbox.y2
    if x2 <= bbox.x1 or y2 <= bbox.y1:
        raise InvalidInputError(f"bbox {bbox.to_list()} lies entirely outside page {page.id}")
    box = BBox(bbox.x1, bbox.y1, x2, y2) if clipped else bbox
    if clipped:
        logger.warning(f"Clipped crop {bbox.to_list()} to page {page.id} bounds")

    blocks = tuple(b for b in page.blocks or () if b.bbox.ioa(box) >= REGION_MEMBERSHIP)
    lines = tuple(line for line in page.lines if box.contains_point(*line.bbox.center))

    image = None
    if page.image is not None:
        image = page.image[
            int(math.floor(box.y1)):int(math.ceil(box.y2)),
            int(math.floor(box.x1)):int(math.ceil(box.x2)),
        ]

    return Region(page_id=page.id, bbox=box, clipped=clipped, blocks=blocks, lines=lines, image=image)
