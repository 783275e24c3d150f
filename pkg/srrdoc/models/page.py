import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from srrdoc.errors import InvalidInputError


class Category(str, Enum):
    """
    Closed set of layout element categories. Values are the lowercase strings
    used in every serialized artifact.
    """
    TEXT = "text"
    TITLE = "title"
    TABLE = "table"
    FIGURE = "figure"
    FORMULA = "formula"
    CAPTION = "caption"
    CODE = "code"
    PAGE_HEADER = "page_header"
    PAGE_FOOTER = "page_footer"

    @classmethod
    def parse(cls, label: str) -> "Category":
        """
        Map a category label from any source dataset onto the unified set.

        Args:
            label: Category name, either one of ours or a known alias

        Returns:
            The unified Category

        Raises:
            InvalidInputError: if the label is unknown
        """
        key = label.strip().lower().replace("-", "_").replace(" ", "_")
        try:
            return cls(key)
        except ValueError:
            pass
        if key in CATEGORY_ALIASES:
            return CATEGORY_ALIASES[key]
        raise InvalidInputError(f"unknown category label: {label!r}")

    @property
    def is_textual(self) -> bool:
        return self not in (Category.TABLE, Category.FIGURE, Category.FORMULA)


# Labels seen in public layout datasets, folded onto the unified classes
CATEGORY_ALIASES: Dict[str, Category] = {
    "paragraph": Category.TEXT,
    "plain_text": Category.TEXT,
    "list": Category.TEXT,
    "list_item": Category.TEXT,
    "reference": Category.TEXT,
    "footnote": Category.TEXT,
    "abstract": Category.TEXT,
    "section_header": Category.TITLE,
    "heading": Category.TITLE,
    "doc_title": Category.TITLE,
    "image": Category.FIGURE,
    "picture": Category.FIGURE,
    "chart": Category.FIGURE,
    "equation": Category.FORMULA,
    "isolate_formula": Category.FORMULA,
    "interline_equation": Category.FORMULA,
    "table_caption": Category.CAPTION,
    "figure_caption": Category.CAPTION,
    "image_caption": Category.CAPTION,
    "code_block": Category.CODE,
    "algorithm": Category.CODE,
    "header": Category.PAGE_HEADER,
    "pageheader": Category.PAGE_HEADER,
    "footer": Category.PAGE_FOOTER,
    "pagefooter": Category.PAGE_FOOTER,
    "page_number": Category.PAGE_FOOTER,
}


@dataclass(frozen=True)
class BBox:
    """
    Axis-aligned box in pixel coordinates, origin top-left.
    """
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidInputError(f"non-finite bbox coordinates: {coords}")
        if self.x1 < 0 or self.y1 < 0:
            raise InvalidInputError(f"negative bbox origin: {coords}")
        if self.x2 <= self.x1 or self.y2 <= self.y1:
            raise InvalidInputError(f"degenerate bbox: {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2

    def contains_point(self, x: float, y: float) -> bool:
        return self.x1 <= x <= self.x2 and self.y1 <= y <= self.y2

    def intersection_area(self, other: "BBox") -> float:
        w = min(self.x2, other.x2) - max(self.x1, other.x1)
        h = min(self.y2, other.y2) - max(self.y1, other.y1)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h

    def ioa(self, other: "BBox") -> float:
        """Fraction of this box's area covered by `other`"""
        return self.intersection_area(other) / self.area

    def iou(self, other: "BBox") -> float:
        inter = self.intersection_area(other)
        return inter / (self.area + other.area - inter)

    def to_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_list(cls, values) -> "BBox":
        if len(values) != 4:
            raise InvalidInputError(f"bbox needs 4 coordinates, got {len(values)}")
        return cls(*(float(v) for v in values))

    @classmethod
    def union_of(cls, boxes: List["BBox"]) -> "BBox":
        """Tight bound around a non-empty list of boxes"""
        return cls(
            min(b.x1 for b in boxes),
            min(b.y1 for b in boxes),
            max(b.x2 for b in boxes),
            max(b.y2 for b in boxes),
        )


@dataclass(frozen=True)
class Line:
    """A text line with its ground-truth reading order"""
    bbox: BBox
    order: int
    text: Optional[str] = None

    def to_dict(self) -> dict:
        data = {"bbox": self.bbox.to_list(), "order": self.order}
        if self.text is not None:
            data["text"] = self.text
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Line":
        return cls(
            bbox=BBox.from_list(data["bbox"]),
            order=int(data["order"]),
            text=data.get("text"),
        )


@dataclass(frozen=True)
class Block:
    """
    A detected or annotated layout element; the unit of recognition and ordering.
    """
    id: str
    bbox: BBox
    category: Category
    content: Optional[str] = None

    def with_content(self, content: Optional[str]) -> "Block":
        return Block(id=self.id, bbox=self.bbox, category=self.category, content=content)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "bbox": self.bbox.to_list(),
            "category": self.category.value,
            "content": self.content,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Block":
        return cls(
            id=str(data["id"]),
            bbox=BBox.from_list(data["bbox"]),
            category=Category.parse(data["category"]),
            content=data.get("content"),
        )


@dataclass(frozen=True)
class Page:
    """
    A document page as an annotation record. `blocks` is None for pages that
    arrive without layout ground truth; `image` is an optional H x W x 3 array.
    """
    id: str
    width: float
    height: float
    blocks: Optional[Tuple[Block, ...]] = None
    lines: Tuple[Line, ...] = ()
    image: Optional[Any] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise InvalidInputError(f"page {self.id} has degenerate size {self.width}x{self.height}")
        if self.blocks is not None:
            object.__setattr__(self, "blocks", tuple(self.blocks))
            seen = set()
            for block in self.blocks:
                if block.id in seen:
                    raise InvalidInputError(f"duplicate block id {block.id} on page {self.id}")
                seen.add(block.id)
                if not self.contains(block.bbox):
                    raise InvalidInputError(
                        f"block {block.id} {block.bbox.to_list()} lies outside page {self.id}"
                    )
        object.__setattr__(self, "lines", tuple(self.lines))

    @property
    def has_ground_truth(self) -> bool:
        return self.blocks is not None

    @property
    def bbox(self) -> BBox:
        return BBox(0, 0, self.width, self.height)

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, bbox: BBox) -> bool:
        return bbox.x2 <= self.width and bbox.y2 <= self.height

    def block_by_id(self, block_id: str) -> Optional[Block]:
        for block in self.blocks or ():
            if block.id == block_id:
                return block
        return None

    def to_dict(self) -> dict:
        return {
            "page_id": self.id,
            "page": {"w": self.width, "h": self.height},
            "blocks": [b.to_dict() for b in self.blocks] if self.blocks is not None else None,
            "lines": [line.to_dict() for line in self.lines],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Page":
        blocks = data.get("blocks")
        return cls(
            id=str(data.get("page_id", "page")),
            width=float(data["page"]["w"]),
            height=float(data["page"]["h"]),
            blocks=[Block.from_dict(b) for b in blocks] if blocks is not None else None,
            lines=[Line.from_dict(line) for line in data.get("lines", [])],
        )
