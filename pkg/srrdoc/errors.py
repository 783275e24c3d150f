"""
Exception hierarchy shared by every pipeline stage.
"""

from typing import Optional


class SRRDocError(Exception):
    """Base class for all srrdoc errors"""


class InvalidInputError(SRRDocError, ValueError):
    """Raised when an operation receives arguments outside its contract"""


class MissingGroundTruthError(SRRDocError):
    """Raised when a ground-truth-only operation gets an unannotated page"""


class DetectionError(SRRDocError):
    """Structure detection failed for a page"""

    def __init__(self, page_id: str, message: str):
        super().__init__(f"detection failed on page {page_id}: {message}")
        self.page_id = page_id


class RecognitionError(SRRDocError):
    """Non-retryable recognition failure (e.g. a malformed response)"""


class RetryableRecognitionError(RecognitionError):
    """Transient recognition failure (timeout, transport, throttling)"""


class CorpusFormatError(SRRDocError):
    """A corpus file could not be parsed"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConfigError(SRRDocError):
    """Invalid or inconsistent pipeline configuration"""


class ModelFormatError(SRRDocError):
    """A relation model file is corrupt or has an unsupported version"""
