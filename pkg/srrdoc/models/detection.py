from dataclasses import dataclass

from srrdoc.errors import InvalidInputError
from srrdoc.models.page import BBox, Block, Category


@dataclass(frozen=True)
class Detection:
    """
    One layout prediction: box, category and confidence.
    """
    bbox: BBox
    category: Category
    score: float = 1.0
    block_id: str = ""  # stable id assigned by the detector
    perturbed: bool = False  # produced by simulated fine-grained detection

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"detection score {self.score} outside [0, 1]")

    def to_block(self, content=None) -> Block:
        return Block(id=self.block_id, bbox=self.bbox, category=self.category, content=content)

    def to_dict(self) -> dict:
        return {
            "id": self.block_id,
            "bbox": self.bbox.to_list(),
            "category": self.category.value,
            "score": self.score,
            "perturbed": self.perturbed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Detection":
        return cls(
            bbox=BBox.from_list(data["bbox"]),
            category=Category.parse(data["category"]),
            score=float(data.get("score", 1.0)),
            block_id=str(data.get("id", "")),
            perturbed=bool(data.get("perturbed", False)),
        )


@dataclass(frozen=True)
class NoiseConfig:
    """
    Simulated fine-grained text detection: split text blocks into their lines
    and jitter every line boundary.
    """
    split_probability: float = 0.0
    boundary_jitter: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.split_probability <= 1.0:
            raise InvalidInputError(f"split_probability {self.split_probability} outside [0, 1]")
        if self.boundary_jitter < 0:
            raise InvalidInputError(f"boundary_jitter must be >= 0, got {self.boundary_jitter}")

    @property
    def is_identity(self) -> bool:
        return self.split_probability == 0.0 and self.boundary_jitter == 0
