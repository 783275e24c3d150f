from dataclasses import dataclass
from typing import List, Optional, Tuple

from srrdoc.models.page import Block


@dataclass(frozen=True)
class ParsedDocument:
    """
    Final structured output for one page: blocks in predicted reading order
    with their recognized contents, plus the assembled markdown.
    """
    page_id: str
    items: Tuple[Tuple[Block, str], ...]
    markdown: str
    fallback: bool = False  # structure detection failed; full page recognized as one block

    @property
    def blocks(self) -> List[Block]:
        return [block for block, _ in self.items]

    @property
    def contents(self) -> List[str]:
        return [content for _, content in self.items]

    def content_of(self, block_id: str) -> Optional[str]:
        for block, content in self.items:
            if block.id == block_id:
                return content
        return None

    def to_dict(self) -> dict:
        """Convert the document to a dictionary for storage"""
        return {
            "page_id": self.page_id,
            "fallback": self.fallback,
            "items": [
                {"rank": rank, "block": block.to_dict(), "content": content}
                for rank, (block, content) in enumerate(self.items)
            ],
            "markdown": self.markdown,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParsedDocument":
        """Create a ParsedDocument from a dictionary"""
        items = sorted(data["items"], key=lambda item: item["rank"])
        return cls(
            page_id=str(data["page_id"]),
            items=tuple((Block.from_dict(item["block"]), item["content"]) for item in items),
            markdown=data["markdown"],
            fallback=bool(data.get("fallback", False)),
        )
