import json
import logging
import os
from typing import Callable, Dict, Iterable, List, Optional, TypeVar, Union

from srrdoc.errors import CorpusFormatError, SRRDocError
from srrdoc.models.corpus import CorpusRecord
from srrdoc.models.page import Page

logger = logging.getLogger(__name__)

CORPUS_FILE = "corpus.jsonl"

T = TypeVar("T")


def resolve_corpus_path(path: str) -> str:
    """A corpus is either a .jsonl file or a directory holding corpus.jsonl"""
    if os.path.isfile(path) or (path.endswith(".jsonl") and not os.path.isdir(path)):
        return path
    return os.path.join(path, CORPUS_FILE)


def read_jsonl(path: str, parse: Callable[[dict], T]) -> List[T]:
    """
    Read one object per non-blank line.

    Args:
        path: JSONL file
        parse: Converts a decoded line into the target object

    Returns:
        Parsed objects in file order

    Raises:
        CorpusFormatError: naming the first malformed line (1-based)
    """
    items = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                if not isinstance(data, dict):
                    raise CorpusFormatError("expected a JSON object", line_number)
                items.append(parse(data))
            except CorpusFormatError:
                raise
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, SRRDocError) as e:
                raise CorpusFormatError(f"{path}: {str(e)}", line_number) from e
    return items


def save_jsonl(records: Iterable[CorpusRecord], path: str) -> int:
    """
    Write records one JSON object per line; an empty corpus gives an empty file.

    Returns:
        Number of records written
    """
    path = resolve_corpus_path(path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True))
            f.write("\n")
            count += 1

    logger.info(f"Saved {count} pages to {path}")
    return count


def load_jsonl(path: str) -> List[CorpusRecord]:
    """Load a ground-truth corpus written by save_jsonl"""
    path = resolve_corpus_path(path)
    records = read_jsonl(path, CorpusRecord.from_dict)
    logger.info(f"Loaded {len(records)} pages from {path}")
    return records


def load_pages(path: str) -> List[Page]:
    """
    Load pages for parsing. Lines may be corpus records or bare page records
    (`blocks` null or absent when no layout annotation is available).
    """
    path = resolve_corpus_path(path)
    pages = read_jsonl(path, Page.from_dict)
    logger.info(f"Loaded {len(pages)} pages from {path}")
    return pages


def _record_or_page(data: dict) -> Union[CorpusRecord, Page]:
    if data.get("gt_order") is not None and data.get("blocks") is not None:
        return CorpusRecord.from_dict(data)
    return Page.from_dict(data)


def load_inputs(path: str) -> List[Union[CorpusRecord, Page]]:
    """Load a parse input: annotated lines become CorpusRecords, the rest bare Pages"""
    path = resolve_corpus_path(path)
    items = read_jsonl(path, _record_or_page)
    annotated = sum(1 for item in items if isinstance(item, CorpusRecord))
    logger.info(f"Loaded {len(items)} pages from {path} ({annotated} with ground truth)")
    return items


class CorpusStore:
    """
    Keeps a loaded ground-truth corpus indexed by page id.
    """

    def __init__(self, path: str):
        """
        Initialize the store.

        Args:
            path: Corpus file or directory
        """
        self.path = resolve_corpus_path(path)
        self.records: Dict[str, CorpusRecord] = {}

        if os.path.exists(self.path):
            for record in load_jsonl(self.path):
                if record.page_id in self.records:
                    logger.warning(f"Duplicate page id {record.page_id} in {self.path}; keeping the last")
                self.records[record.page_id] = record
        else:
            logger.info(f"No corpus at {self.path}, starting empty")

    def get(self, page_id: str) -> Optional[CorpusRecord]:
        return self.records.get(page_id)

    def all(self) -> List[CorpusRecord]:
        return list(self.records.values())

    def add(self, records: Iterable[CorpusRecord]):
        for record in records:
            self.records[record.page_id] = record
        self.save()

    def save(self):
        save_jsonl(self.records.values(), self.path)
