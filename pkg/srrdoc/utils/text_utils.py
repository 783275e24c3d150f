import hashlib
import re
import unicodedata
from typing import Union


def normalize_text(text: str) -> str:
    """
    Normalize text before edit-distance scoring.

    Args:
        text: Text to normalize

    Returns:
        NFC-normalized text with runs of whitespace collapsed to one space
        and leading/trailing whitespace removed
    """
    text = unicodedata.normalize("NFC", text or "")

    # Replace multiple spaces with a single space
    text = re.sub(r"\s+", " ", text)

    return text.strip()


def count_tokens(text: str) -> int:
    """Whitespace token count, at least 1 so every request has a cost"""
    return max(1, len((text or "").split()))


def stable_seed(*parts: Union[str, int]) -> int:
    """
    Derive a 64-bit seed from arbitrary parts, stable across processes
    (unlike the builtin hash()).
    """
    digest = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "big")
