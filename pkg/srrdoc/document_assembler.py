import json
import logging
import os
from typing import Dict, List, Optional, Sequence

import markdown

from srrdoc.errors import InvalidInputError
from srrdoc.models.document import ParsedDocument
from srrdoc.models.page import Block, Category

logger = logging.getLogger(__name__)

HTML_TEMPLATE = """<!DOCTYPE html>
<html>
<head>
    <meta charset="utf-8">
    <meta name="viewport" content="width=device-width, initial-scale=1">
    <title>{title}</title>
    <style>
        body {{ font-family: Arial, sans-serif; line-height: 1.6; margin: 0 auto; max-width: 800px; padding: 20px; }}
        table {{ border-collapse: collapse; }}
        td {{ border: 1px solid #ddd; padding: 4px 8px; }}
    </style>
</head>
<body>
{body}
</body>
</html>"""


def _check_permutation(order: Sequence[int], n: int):
    if sorted(order) != list(range(n)):
        raise InvalidInputError(f"order {list(order)} is not a permutation of 0..{n - 1}")


def render_block(block: Block, content: str, captions: Optional[Dict[str, List[str]]] = None) -> str:
    """
    Render one block as markdown.

    Args:
        block: The block being rendered
        content: Its recognized content
        captions: Caption texts keyed by the id of the figure/table they describe

    Returns:
        Markdown fragment (without surrounding blank lines)
    """
    content = content or ""
    if block.category == Category.FIGURE:
        caption_text = " ".join((captions or {}).get(block.id, []))
        return f"![{caption_text}](#{block.id})"
    if not content:
        return ""
    if block.category == Category.TITLE:
        return f"# {content}"
    if block.category == Category.FORMULA:
        return f"$$\n{content}\n$$"
    # Tables are already HTML; everything else is a plain paragraph
    return content


def assemble_document(
    blocks: Sequence[Block],
    contents: Sequence[str],
    order: Sequence[int],
    links: Optional[Dict[str, str]] = None,
    page_id: str = "page",
    fallback: bool = False,
) -> ParsedDocument:
    """
    Integrate recognized block contents according to the predicted reading order.

    Args:
        blocks: Blocks of the page
        contents: Recognized content per block, aligned with `blocks`
        order: Rank of each block (order[i] is the reading position of blocks[i])
        links: Caption block id -> figure/table block id
        page_id: Identifier of the page
        fallback: Whether the page went through the full-page fallback

    Returns:
        ParsedDocument with blocks in rank order and the assembled markdown
    """
    if not (len(blocks) == len(contents) == len(order)):
        raise InvalidInputError(
            f"length mismatch: {len(blocks)} blocks, {len(contents)} contents, {len(order)} ranks"
        )
    _check_permutation(order, len(blocks))

    captions: Dict[str, List[str]] = {}
    if links:
        content_by_id = {b.id: c for b, c in zip(blocks, contents)}
        for caption_id, target_id in links.items():
            text = content_by_id.get(caption_id)
            if text:
                captions.setdefault(target_id, []).append(text)

    ranked = sorted(range(len(blocks)), key=lambda i: order[i])
    items = tuple((blocks[i], contents[i] or "") for i in ranked)
    parts = [render_block(block, content, captions) for block, content in items]
    text = "\n\n".join(parts) + "\n" if parts else ""

    return ParsedDocument(page_id=page_id, items=items, markdown=text, fallback=fallback)


class DocumentAssembler:
    """
    Writes parsed documents to the output directory as markdown, HTML and JSON.
    """

    def __init__(self, output_dir: str = "output", write_html: bool = True):
        """
        Initialize the assembler.

        Args:
            output_dir: Directory to store parsed documents
            write_html: Also write an HTML rendering of each document
        """
        self.output_dir = output_dir
        self.write_html = write_html

        # Create output directory if it doesn't exist
        os.makedirs(output_dir, exist_ok=True)

    def save(self, document: ParsedDocument) -> Dict[str, str]:
        """
        Save a parsed document.

        Args:
            document: Document to save

        Returns:
            Mapping of artifact kind ('markdown', 'json', 'html') to file name
        """
        files = {
            "markdown": f"{document.page_id}.md",
            "json": f"{document.page_id}.json",
        }

        with open(os.path.join(self.output_dir, files["markdown"]), "w", encoding="utf-8", newline="\n") as f:
            f.write(document.markdown)

        with open(os.path.join(self.output_dir, files["json"]), "w", encoding="utf-8", newline="\n") as f:
            json.dump(document.to_dict(), f, ensure_ascii=False, indent=2, sort_keys=True)

        if self.write_html:
            try:
                html_path = os.path.join(self.output_dir, f"{document.page_id}.html")
                with open(html_path, "w", encoding="utf-8", newline="\n") as f:
                    f.write(to_html(document))
                files["html"] = f"{document.page_id}.html"
            except Exception as e:
                logger.error(f"Error converting {document.page_id} to HTML: {str(e)}")

        logger.debug(f"Saved document {document.page_id} to {self.output_dir}")
        return files

    def load(self, page_id: str) -> ParsedDocument:
        with open(os.path.join(self.output_dir, f"{page_id}.json"), "r", encoding="utf-8") as f:
            return ParsedDocument.from_dict(json.load(f))


def to_html(document: ParsedDocument) -> str:
    """Render a parsed document's markdown as a standalone HTML page"""
    body = markdown.markdown(document.markdown)
    return HTML_TEMPLATE.format(title=document.page_id, body=body)
