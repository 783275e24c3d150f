from dataclasses import dataclass
from typing import Optional

from srrdoc.errors import InvalidInputError
from srrdoc.models.page import Category
from srrdoc.utils.geometry import Region


@dataclass(frozen=True)
class PromptTemplate:
    """Instruction sent to the recognizer for one block category"""
    category: Category
    prompt_text: str

    def __post_init__(self):
        if not self.prompt_text.strip():
            raise InvalidInputError(f"empty prompt for category {self.category.value}")


@dataclass(frozen=True)
class RecognitionRequest:
    """
    Everything a recognizer needs for one block: the cropped region, the block
    category and the category's prompt.
    """
    page_id: str
    block_id: str
    region: Region
    category: Category
    prompt: PromptTemplate
    perturbed: bool = False

    def __post_init__(self):
        if self.prompt.category != self.category:
            raise InvalidInputError(
                f"prompt for {self.prompt.category.value} used on a {self.category.value} block"
            )


@dataclass(frozen=True)
class RecognitionResult:
    block_id: str
    content: str
    latency: float
    attempts: int = 1
    failed: bool = False
    error: Optional[str] = None

    def __post_init__(self):
        if self.latency < 0:
            raise InvalidInputError(f"negative latency {self.latency}")

    def to_dict(self) -> dict:
        return {
            "block_id": self.block_id,
            "content": self.content,
            "latency": self.latency,
            "attempts": self.attempts,
            "failed": self.failed,
            "error": self.error,
        }


@dataclass(frozen=True)
class ErrorModel:
    """
    Deterministic noise applied by the mock recognizer.

    char_error_rate: probability of replacing each character
    boundary_artifact: add a spurious superscript-like token to regions cut by
        perturbed (fine-grained) detections
    """
    char_error_rate: float = 0.0
    boundary_artifact: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.char_error_rate <= 1.0:
            raise InvalidInputError(f"char_error_rate {self.char_error_rate} outside [0, 1]")
