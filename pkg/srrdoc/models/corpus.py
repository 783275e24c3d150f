from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from srrdoc.errors import InvalidInputError
from srrdoc.models.page import Block, Page


class LayoutTemplate(str, Enum):
    SINGLE_COLUMN = "single_column"
    DOUBLE_COLUMN = "double_column"
    FIGURE_WITH_CAPTION = "figure_with_caption"
    TABLE_REPORT = "table_report"
    EXAM_PAPER = "exam_paper"
    NEWSPAPER_3COL = "newspaper_3col"

    @classmethod
    def parse_list(cls, value: str) -> List["LayoutTemplate"]:
        """Parse a comma separated template list; 'all' selects every template"""
        if value.strip().lower() == "all":
            return list(cls)
        try:
            return [cls(v.strip().lower()) for v in value.split(",") if v.strip()]
        except ValueError as e:
            raise InvalidInputError(f"unknown layout template in {value!r}") from e


@dataclass(frozen=True)
class CorpusRecord:
    """
    A ground-truth page: layout, per-block contents, line orders, block
    reading order and caption links.

    gt_order[i] is the reading rank of page.blocks[i]; links maps a caption
    block id to the id of the figure or table it describes.
    """
    page: Page
    gt_order: Tuple[int, ...]
    links: Dict[str, str] = field(default_factory=dict)
    template: Optional[LayoutTemplate] = None

    def __post_init__(self):
        object.__setattr__(self, "gt_order", tuple(int(r) for r in self.gt_order))
        if not self.page.has_ground_truth:
            raise InvalidInputError(f"corpus page {self.page.id} has no blocks annotation")
        if sorted(self.gt_order) != list(range(len(self.page.blocks))):
            raise InvalidInputError(f"gt_order of page {self.page.id} is not a permutation")
        ids = {b.id for b in self.page.blocks}
        for caption_id, target_id in self.links.items():
            if caption_id not in ids or target_id not in ids:
                raise InvalidInputError(f"dangling caption link {caption_id} -> {target_id}")

    @property
    def page_id(self) -> str:
        return self.page.id

    @property
    def blocks(self) -> Tuple[Block, ...]:
        return self.page.blocks

    def blocks_in_order(self) -> List[Block]:
        return [b for _, b in sorted(zip(self.gt_order, self.page.blocks), key=lambda pair: pair[0])]

    def id_sequence(self) -> List[str]:
        """Block ids in ground-truth reading order"""
        return [b.id for b in self.blocks_in_order()]

    def to_dict(self) -> dict:
        data = self.page.to_dict()
        data["gt_order"] = list(self.gt_order)
        data["links"] = dict(self.links)
        if self.template is not None:
            data["template"] = self.template.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusRecord":
        template = data.get("template")
        return cls(
            page=Page.from_dict(data),
            gt_order=data["gt_order"],
            links=dict(data.get("links", {})),
            template=LayoutTemplate(template) if template else None,
        )
